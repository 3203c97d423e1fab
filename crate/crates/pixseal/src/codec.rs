//! Watermark embedding and per-pixel extraction.
//!
//! Embedding builds a signed modulation plane from the keyed carriers: a
//! fixed-sign synchronization carrier plus one carrier per message bit, each
//! bit selecting the sign of its carrier. The plane is normalized so its mean
//! square is exactly 1/(n_bits+1) and its amplitude never exceeds 1, then
//! scaled per pixel by the perceptual heatmap and added inside the mask.
//!
//! Extraction is blind and local. The luma residual (luma minus its local
//! box mean) is correlated with every carrier over a sliding WxW window, and
//! each normalized correlation is squashed through a logistic curve. The
//! result is one detection-probability plane (from the synchronization
//! carrier) and one probability plane per message bit. Because the window
//! side is a multiple of the carrier tile, every carrier sums to exactly zero
//! over any window position, which makes the correlations invariant to local
//! brightness and to the overall watermark gain.

use std::fs;
use std::io::Read as _;
use std::path::Path;

use crate::carrier::{CarrierTable, WatermarkKey};
use crate::error::{Error, Result};
use crate::jnd::{jnd_map, JndParams};
use crate::raster::{resize_bilinear_plane, ImageBuffer, MaskMap, Message};

/// Weight of the synchronization carrier relative to a bit carrier inside the
/// modulation plane. Raising it strengthens detection at the cost of bit
/// decoding margin; 2*sqrt(2) balances the two for 32-bit messages.
pub const SYNC_WEIGHT: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Embedding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    /// Global strength multiplier on top of the per-pixel heatmap.
    pub alpha: f64,
    /// Parameters of the perceptual heatmap.
    pub jnd: JndParams,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            alpha: 2.0,
            jnd: JndParams::default(),
        }
    }
}

impl EmbedConfig {
    pub fn validated(self) -> Result<Self> {
        if !(self.alpha > 0.0) {
            return Err(Error::BadParam(format!(
                "embedding strength must be > 0, got {}",
                self.alpha
            )));
        }
        self.jnd.validated()?;
        Ok(self)
    }
}

/// Extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Side of the sliding correlation window in pixels.
    pub window: usize,
    /// Slope of the logistic squashing applied to correlations.
    pub slope: f64,
    /// Optional processing size: the image is resampled to this size before
    /// extraction and the output planes are resampled back. Use the size the
    /// watermark was embedded at when the image has been rescaled since.
    pub proc_size: Option<(usize, usize)>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            window: 16,
            slope: 8.0,
            proc_size: None,
        }
    }
}

impl ExtractConfig {
    pub fn validated(self) -> Result<Self> {
        if self.window < 5 {
            return Err(Error::BadParam(format!(
                "correlation window must be at least 5, got {}",
                self.window
            )));
        }
        if !(self.slope > 0.0) {
            return Err(Error::BadParam(format!(
                "logistic slope must be > 0, got {}",
                self.slope
            )));
        }
        if let Some((w, h)) = self.proc_size {
            if w == 0 || h == 0 {
                return Err(Error::BadParam(
                    "processing size must have nonzero dimensions".into(),
                ));
            }
        }
        Ok(self)
    }
}

/// The logistic squashing curve 1 / (1 + exp(-x)).
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Window energies at or below this are rounding noise from the summed-area
/// tables, not signal: a real residual is at least a fraction of one 8-bit
/// level, giving window energies above 1e-7. Such windows count as flat.
const ENERGY_FLOOR: f64 = 1e-18;

/// Denominator of the modulation-plane normalization for n bit carriers.
fn delta_denominator(n: usize) -> f64 {
    ((n as f64 + 1.0) * (SYNC_WEIGHT * SYNC_WEIGHT + n as f64)).sqrt()
}

/// Builds the signed modulation plane for a message under a key.
///
/// delta = (w0*c0 + sum_k s_k*c_k) / sqrt((n+1)*(w0^2+n)) with s_k = 2m_k-1,
/// where c0 is the synchronization carrier and c_k the carrier of bit k. The
/// same plane is added to every channel. Over any carrier tile the mean of
/// delta^2 is exactly 1/(n+1), and |delta| <= 1 everywhere.
pub fn make_delta(
    key: &WatermarkKey,
    msg: &Message,
    width: usize,
    height: usize,
) -> Result<Vec<f64>> {
    if msg.n_bits() != key.n_bits() {
        return Err(Error::MessageLength {
            expected: key.n_bits(),
            got: msg.n_bits(),
        });
    }
    let table = CarrierTable::new(key)?;
    let n = key.n_bits();
    let denom = delta_denominator(n);
    let tile = key.tile();
    // Accumulate one tile of the combined pattern, then tile it over the
    // plane, so the per-pixel cost does not grow with the message length.
    let area = tile * tile;
    let mut combined = vec![0.0f64; area];
    for (p, v) in combined.iter_mut().enumerate() {
        *v = SYNC_WEIGHT * table.tile_pattern(0)[p];
    }
    for k in 0..n {
        let sign = if msg.bit(k) == 1 { 1.0 } else { -1.0 };
        let pat = table.tile_pattern(k + 1);
        for (p, v) in combined.iter_mut().enumerate() {
            *v += sign * pat[p];
        }
    }
    for v in combined.iter_mut() {
        *v /= denom;
    }
    let mut delta = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            delta.push(combined[(y % tile) * tile + (x % tile)]);
        }
    }
    Ok(delta)
}

/// Embeds a message into the masked region of an image.
///
/// Inside the mask, each channel gets `alpha * H_c/255 * delta` added and is
/// clamped to [0,1]; H_c is the perceptual heatmap of the input image.
/// Pixels outside the mask are copied through untouched.
pub fn embed(
    img: &ImageBuffer,
    mask: &MaskMap,
    key: &WatermarkKey,
    msg: &Message,
    cfg: &EmbedConfig,
) -> Result<ImageBuffer> {
    let cfg = cfg.validated()?;
    img.check_mask_dims(mask, "embedding mask")?;
    let delta = make_delta(key, msg, img.width(), img.height())?;
    Ok(apply_delta(img, mask, &delta, &cfg))
}

/// Embeds with the modulation plane generated at a lower processing size and
/// bilinearly upsampled to the image size.
///
/// Extraction of the result should pass the same processing size so the
/// carriers line up. With the processing size equal to the image size this is
/// identical to [`embed`].
pub fn embed_highres(
    img: &ImageBuffer,
    mask: &MaskMap,
    key: &WatermarkKey,
    msg: &Message,
    cfg: &EmbedConfig,
    proc_width: usize,
    proc_height: usize,
) -> Result<ImageBuffer> {
    let cfg = cfg.validated()?;
    img.check_mask_dims(mask, "embedding mask")?;
    if proc_width == 0 || proc_height == 0 {
        return Err(Error::BadParam(
            "processing size must have nonzero dimensions".into(),
        ));
    }
    let small = make_delta(key, msg, proc_width, proc_height)?;
    let delta = resize_bilinear_plane(
        &small,
        proc_width,
        proc_height,
        img.width(),
        img.height(),
    );
    Ok(apply_delta(img, mask, &delta, &cfg))
}

/// Embeds several messages into pairwise disjoint regions of one image.
///
/// Every region is embedded from the original image and the marked pixels
/// are merged, so the result in each region is identical to a single-mask
/// [`embed`] with that region's message.
pub fn embed_multi(
    img: &ImageBuffer,
    pairs: &[(&MaskMap, &Message)],
    key: &WatermarkKey,
    cfg: &EmbedConfig,
) -> Result<ImageBuffer> {
    let cfg = cfg.validated()?;
    for (i, (mask, _)) in pairs.iter().enumerate() {
        img.check_mask_dims(mask, "embedding mask")?;
        for (other, _) in &pairs[i + 1..] {
            if !mask.disjoint_with(other) {
                return Err(Error::BadParam(
                    "multi-watermark masks must be pairwise disjoint".into(),
                ));
            }
        }
    }
    let mut out = img.clone();
    for (mask, msg) in pairs {
        let marked = embed(img, mask, key, msg, &cfg)?;
        let gate = mask.binarize();
        for c in 0..3 {
            let src = marked.plane(c).to_vec();
            let dst = out.plane_mut(c);
            for (i, &g) in gate.data().iter().enumerate() {
                if g != 0.0 {
                    dst[i] = src[i];
                }
            }
        }
    }
    Ok(out)
}

fn apply_delta(img: &ImageBuffer, mask: &MaskMap, delta: &[f64], cfg: &EmbedConfig) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let gate = mask.binarize();
    let heat = jnd_map(img, &cfg.jnd);
    let mut out = img.clone();
    for c in 0..3 {
        let hc = heat.plane(c);
        let plane = out.plane_mut(c);
        for i in 0..w * h {
            if gate.data()[i] != 0.0 {
                plane[i] = (plane[i] + cfg.alpha * hc[i] / 255.0 * delta[i]).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Per-pixel extractor output: a detection-probability plane followed by one
/// probability plane per message bit, all in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorOutput {
    n_bits: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

const TENSOR_MAGIC: &[u8; 4] = b"WAMD";

impl ExtractorOutput {
    /// Wraps raw plane data; `data` holds 1+n_bits planes of width*height.
    pub fn from_planes(n_bits: usize, width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), (1 + n_bits) * width * height);
        ExtractorOutput {
            n_bits,
            width,
            height,
            data,
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The detection-probability plane.
    pub fn det(&self) -> &[f64] {
        &self.data[..self.width * self.height]
    }

    /// The probability plane of message bit `k`.
    pub fn dec(&self, k: usize) -> &[f64] {
        assert!(k < self.n_bits);
        let n = self.width * self.height;
        &self.data[(1 + k) * n..(2 + k) * n]
    }

    /// Writes the tensor: magic "WAMD", then n_bits, height, width as
    /// little-endian u32, then all planes as little-endian f32.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(16 + 4 * self.data.len());
        bytes.extend_from_slice(TENSOR_MAGIC);
        bytes.extend_from_slice(&(self.n_bits as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.height as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.width as u32).to_le_bytes());
        for &v in &self.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        fs::write(path, bytes).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a tensor written by [`ExtractorOutput::save`].
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut file = fs::File::open(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut header = [0u8; 16];
        file.read_exact(&mut header)
            .map_err(|e| Error::TensorFormat(format!("{}: {e}", path.display())))?;
        if &header[..4] != TENSOR_MAGIC {
            return Err(Error::TensorFormat(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let n_bits = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let count = (1 + n_bits)
            .checked_mul(width)
            .and_then(|n| n.checked_mul(height))
            .ok_or_else(|| Error::TensorFormat(format!("{}: absurd dimensions", path.display())))?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)
            .map_err(|e| Error::TensorFormat(format!("{}: {e}", path.display())))?;
        if raw.len() != 4 * count {
            return Err(Error::TensorFormat(format!(
                "{}: expected {} data bytes, found {}",
                path.display(),
                4 * count,
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(ExtractorOutput {
            n_bits,
            width,
            height,
            data,
        })
    }
}

/// Sliding-window sums over a plane with edge replication.
///
/// Values outside the plane are read from the nearest edge pixel, then a
/// summed-area table over the padded plane yields every window sum in O(1).
/// The window at (y, x) spans rows y-win/2 .. y-win/2+win-1 and likewise for
/// columns, which centers it for odd sizes and floor-centers it for even.
fn box_sums(value: impl Fn(usize, usize) -> f64, width: usize, height: usize, win: usize, out: &mut [f64]) {
    assert_eq!(out.len(), width * height);
    let pad = win - 1;
    let (pw, ph) = (width + pad, height + pad);
    let pad_t = win / 2;
    let stride = pw + 1;
    let mut sat = vec![0.0f64; (ph + 1) * stride];
    for py in 0..ph {
        let sy = (py as isize - pad_t as isize).clamp(0, height as isize - 1) as usize;
        let mut row_acc = 0.0;
        for px in 0..pw {
            let sx = (px as isize - pad_t as isize).clamp(0, width as isize - 1) as usize;
            row_acc += value(sy, sx);
            sat[(py + 1) * stride + px + 1] = sat[py * stride + px + 1] + row_acc;
        }
    }
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = sat[(y + win) * stride + x + win] - sat[y * stride + x + win]
                - sat[(y + win) * stride + x]
                + sat[y * stride + x];
        }
    }
}

/// Runs the per-pixel extractor.
///
/// Returns the detection plane and one plane per message bit at the image
/// size. An all-flat window (zero residual energy) yields probability 0.5.
pub fn extract(img: &ImageBuffer, key: &WatermarkKey, cfg: &ExtractConfig) -> Result<ExtractorOutput> {
    let cfg = cfg.validated()?;
    let lum = img.luma();
    let (w, h) = (img.width(), img.height());
    match cfg.proc_size {
        None => extract_from_luma(&lum, w, h, key, &cfg),
        Some((pw, ph)) => {
            let small = resize_bilinear_plane(&lum, w, h, pw, ph);
            let out = extract_from_luma(&small, pw, ph, key, &cfg)?;
            let n = key.n_bits();
            let mut data = Vec::with_capacity((1 + n) * w * h);
            data.extend(resize_bilinear_plane(out.det(), pw, ph, w, h));
            for k in 0..n {
                data.extend(resize_bilinear_plane(out.dec(k), pw, ph, w, h));
            }
            Ok(ExtractorOutput::from_planes(n, w, h, data))
        }
    }
}

fn extract_from_luma(
    lum: &[f64],
    width: usize,
    height: usize,
    key: &WatermarkKey,
    cfg: &ExtractConfig,
) -> Result<ExtractorOutput> {
    let table = CarrierTable::new(key)?;
    let n = key.n_bits();
    let win = cfg.window;
    let size = width * height;
    let area = (win * win) as f64;

    // Residual: luma minus its local box mean.
    let mut sums = vec![0.0f64; size];
    box_sums(|y, x| lum[y * width + x], width, height, win, &mut sums);
    let residual: Vec<f64> = lum
        .iter()
        .zip(&sums)
        .map(|(&v, &s)| v - s / area)
        .collect();

    // Residual energy per window, clamped against negative rounding dust.
    let mut energy = vec![0.0f64; size];
    box_sums(
        |y, x| {
            let r = residual[y * width + x];
            r * r
        },
        width,
        height,
        win,
        &mut energy,
    );
    for e in energy.iter_mut() {
        *e = e.max(0.0);
    }

    let mut data = vec![0.0f64; (1 + n) * size];
    let mut corr = vec![0.0f64; size];
    for carrier_index in 0..=n {
        box_sums(
            |y, x| residual[y * width + x] * table.value(carrier_index, y, x),
            width,
            height,
            win,
            &mut corr,
        );
        let plane = &mut data[carrier_index * size..(carrier_index + 1) * size];
        for i in 0..size {
            let rho = if energy[i] > ENERGY_FLOOR {
                (corr[i] / (win as f64 * energy[i].sqrt())).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            plane[i] = logistic(cfg.slope * rho);
        }
    }
    Ok(ExtractorOutput::from_planes(n, width, height, data))
}
