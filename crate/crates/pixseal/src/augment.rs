//! Image transformations for robustness evaluation.
//!
//! Two families: geometric kinds (flip, crop, resize, rotate, perspective)
//! move pixels and therefore co-transform the watermark mask through the
//! identical spatial map, bilinear sampling, then binarization at 1/2;
//! valuemetric kinds (brightness, contrast, saturation, hue, blur, median,
//! JPEG) change values only and pass the mask through untouched. Splicing,
//! which pastes a rectangle of a watermarked image onto a background, is a
//! separate operation because it needs the second image.
//!
//! Geometric warps share one code path for images and masks: a per-kind
//! inverse coordinate map feeds a single bilinear resampler, so mask
//! co-transformation is self-consistent with image transformation by
//! construction. Rotation and perspective fill uncovered pixels with the
//! image's mean gray; mask warps always fill with 0.

pub mod jpeg;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::raster::{resize_bilinear_plane, ImageBuffer, MaskMap};

/// The supported transformations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Identity,
    Hflip,
    /// Centered crop; the parameter is the per-axis edge ratio.
    Crop,
    /// Uniform rescale; the parameter is the per-axis edge ratio.
    Resize,
    /// Rotation about the image center; the parameter is in degrees.
    Rotate,
    /// Random inward corner displacement; the parameter is the distortion
    /// scale.
    Perspective,
    Brightness,
    Contrast,
    Saturation,
    /// Hue rotation; the parameter is in turns of the color wheel.
    Hue,
    GaussianBlur,
    MedianFilter,
    /// Baseline JPEG round trip; the parameter is the quality.
    Jpeg,
    /// Paste a random rectangle back onto the original image.
    SpliceProportion,
    /// Paste a random rectangle onto a different background image.
    SpliceCollage,
}

impl AugmentKind {
    /// Whether the kind moves pixels (and therefore the mask).
    pub fn is_geometric(self) -> bool {
        matches!(
            self,
            AugmentKind::Hflip
                | AugmentKind::Crop
                | AugmentKind::Resize
                | AugmentKind::Rotate
                | AugmentKind::Perspective
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Identity => "identity",
            AugmentKind::Hflip => "hflip",
            AugmentKind::Crop => "crop",
            AugmentKind::Resize => "resize",
            AugmentKind::Rotate => "rotate",
            AugmentKind::Perspective => "perspective",
            AugmentKind::Brightness => "brightness",
            AugmentKind::Contrast => "contrast",
            AugmentKind::Saturation => "saturation",
            AugmentKind::Hue => "hue",
            AugmentKind::GaussianBlur => "gaussian_blur",
            AugmentKind::MedianFilter => "median_filter",
            AugmentKind::Jpeg => "jpeg",
            AugmentKind::SpliceProportion => "splice_proportion",
            AugmentKind::SpliceCollage => "splice_collage",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => AugmentKind::Identity,
            "hflip" => AugmentKind::Hflip,
            "crop" => AugmentKind::Crop,
            "resize" => AugmentKind::Resize,
            "rotate" => AugmentKind::Rotate,
            "perspective" => AugmentKind::Perspective,
            "brightness" => AugmentKind::Brightness,
            "contrast" => AugmentKind::Contrast,
            "saturation" => AugmentKind::Saturation,
            "hue" => AugmentKind::Hue,
            "gaussian_blur" => AugmentKind::GaussianBlur,
            "median_filter" => AugmentKind::MedianFilter,
            "jpeg" => AugmentKind::Jpeg,
            "splice_proportion" => AugmentKind::SpliceProportion,
            "splice_collage" => AugmentKind::SpliceCollage,
            other => {
                return Err(Error::BadParam(format!(
                    "unknown augmentation kind {other:?}"
                )))
            }
        })
    }
}

/// One transformation with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub param: f64,
    /// Seed for the kinds that draw randomness (perspective corners).
    pub seed: u64,
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind, param: f64) -> Result<Self> {
        let spec = AugmentSpec {
            kind,
            param,
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks the parameter against the kind's evaluation range.
    pub fn validate(&self) -> Result<()> {
        let p = self.param;
        let range_err = |range: &str| {
            Err(Error::BadParam(format!(
                "{} parameter {p} outside {range}",
                self.kind
            )))
        };
        let odd_kernel = |max: f64| {
            if p.fract() != 0.0 || !(1.0..=max).contains(&p) || (p as u64) % 2 == 0 {
                Err(Error::BadParam(format!(
                    "{} kernel must be an odd integer in [1,{max}], got {p}",
                    self.kind
                )))
            } else {
                Ok(())
            }
        };
        match self.kind {
            AugmentKind::Identity | AugmentKind::Hflip => Ok(()),
            AugmentKind::Crop => {
                if (0.33..=1.0).contains(&p) { Ok(()) } else { range_err("[0.33,1]") }
            }
            AugmentKind::Resize => {
                if (0.5..=1.5).contains(&p) { Ok(()) } else { range_err("[0.5,1.5]") }
            }
            AugmentKind::Rotate => {
                if (-10.0..=10.0).contains(&p) { Ok(()) } else { range_err("[-10,10]") }
            }
            AugmentKind::Perspective => {
                if (0.1..=0.5).contains(&p) { Ok(()) } else { range_err("[0.1,0.5]") }
            }
            AugmentKind::Brightness | AugmentKind::Contrast | AugmentKind::Saturation => {
                if (0.5..=2.0).contains(&p) { Ok(()) } else { range_err("[0.5,2]") }
            }
            AugmentKind::Hue => {
                if (-0.1..=0.1).contains(&p) { Ok(()) } else { range_err("[-0.1,0.1]") }
            }
            AugmentKind::GaussianBlur => odd_kernel(17.0),
            AugmentKind::MedianFilter => odd_kernel(7.0),
            AugmentKind::Jpeg => {
                if p.fract() == 0.0 && (1.0..=100.0).contains(&p) {
                    Ok(())
                } else {
                    range_err("integer [1,100]")
                }
            }
            AugmentKind::SpliceProportion | AugmentKind::SpliceCollage => {
                if p > 0.0 && p <= 1.0 { Ok(()) } else { range_err("(0,1]") }
            }
        }
    }
}

/// Output dimensions of a geometric kind.
fn output_dims(kind: AugmentKind, param: f64, sw: usize, sh: usize) -> (usize, usize) {
    match kind {
        AugmentKind::Crop | AugmentKind::Resize => (
            ((param * sw as f64).round() as usize).max(1),
            ((param * sh as f64).round() as usize).max(1),
        ),
        _ => (sw, sh),
    }
}

/// Inverse coordinate map of a geometric kind: output pixel to source
/// coordinate in (row, column) order. Coordinates outside the source grid
/// trigger the fill value during resampling.
fn build_map(
    kind: AugmentKind,
    param: f64,
    seed: u64,
    sw: usize,
    sh: usize,
    dw: usize,
    dh: usize,
) -> Box<dyn Fn(usize, usize) -> (f64, f64)> {
    match kind {
        AugmentKind::Hflip => Box::new(move |y, x| (y as f64, (sw - 1 - x) as f64)),
        AugmentKind::Crop => {
            let y0 = (sh - dh) / 2;
            let x0 = (sw - dw) / 2;
            Box::new(move |y, x| ((y0 + y) as f64, (x0 + x) as f64))
        }
        AugmentKind::Resize => {
            let sy = sh as f64 / dh as f64;
            let sx = sw as f64 / dw as f64;
            Box::new(move |y, x| {
                (
                    ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64),
                    ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64),
                )
            })
        }
        AugmentKind::Rotate => {
            let theta = param.to_radians();
            let (sin, cos) = theta.sin_cos();
            let cy = (sh - 1) as f64 / 2.0;
            let cx = (sw - 1) as f64 / 2.0;
            Box::new(move |y, x| {
                let dy = y as f64 - cy;
                let dx = x as f64 - cx;
                (cy + cos * dy + sin * dx, cx - sin * dy + cos * dx)
            })
        }
        AugmentKind::Perspective => {
            let coeffs = perspective_coefficients(param, seed, sw, sh);
            Box::new(move |y, x| {
                let (x, y) = (x as f64, y as f64);
                let denom = coeffs[6] * x + coeffs[7] * y + 1.0;
                let u = (coeffs[0] * x + coeffs[1] * y + coeffs[2]) / denom;
                let v = (coeffs[3] * x + coeffs[4] * y + coeffs[5]) / denom;
                (v, u)
            })
        }
        _ => unreachable!("build_map called for a non-geometric kind"),
    }
}

/// Homography coefficients mapping output coordinates to source coordinates
/// for the perspective kind: the four frame corners, displaced inward by
/// uniform amounts up to `distortion * edge/2`, map back to the original
/// corners.
fn perspective_coefficients(distortion: f64, seed: u64, sw: usize, sh: usize) -> [f64; 8] {
    use rand::SeedableRng;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let half_w = sw as f64 / 2.0;
    let half_h = sh as f64 / 2.0;
    let mut shift = |limit: f64| rng.random_range(0.0..=distortion * limit);
    let (w1, h1) = ((sw - 1) as f64, (sh - 1) as f64);
    // Displaced corners in (x, y), drawn in a fixed order.
    let displaced = [
        (shift(half_w), shift(half_h)),
        (w1 - shift(half_w), shift(half_h)),
        (shift(half_w), h1 - shift(half_h)),
        (w1 - shift(half_w), h1 - shift(half_h)),
    ];
    let original = [(0.0, 0.0), (w1, 0.0), (0.0, h1), (w1, h1)];
    solve_homography(&displaced, &original)
}

/// Least-squares-free exact homography through four point pairs, solved with
/// Gaussian elimination and partial pivoting. Maps (x,y) to (u,v) via
/// u = (a x + b y + c)/(g x + h y + 1), v = (d x + e y + f)/(g x + h y + 1).
fn solve_homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> [f64; 8] {
    let mut m = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (u, v) = to[i];
        m[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        m[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in 0..8 {
            if row != col && m[row][col] != 0.0 {
                let factor = m[row][col] / m[col][col];
                for k in col..9 {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
    }
    let mut coeffs = [0.0f64; 8];
    for (i, c) in coeffs.iter_mut().enumerate() {
        *c = m[i][8] / m[i][i];
    }
    coeffs
}

/// Resamples one plane through an inverse coordinate map with bilinear
/// interpolation; source coordinates outside the pixel grid produce `fill`.
fn warp_plane(
    src: &[f64],
    sw: usize,
    sh: usize,
    dw: usize,
    dh: usize,
    fill: f64,
    map: &dyn Fn(usize, usize) -> (f64, f64),
) -> Vec<f64> {
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        for x in 0..dw {
            let (fy, fx) = map(y, x);
            if fy < 0.0 || fx < 0.0 || fy > (sh - 1) as f64 || fx > (sw - 1) as f64 {
                out.push(fill);
                continue;
            }
            let y0 = fy.floor() as usize;
            let x0 = fx.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let x1 = (x0 + 1).min(sw - 1);
            let ty = fy - y0 as f64;
            let tx = fx - x0 as f64;
            let top = (1.0 - tx) * src[y0 * sw + x0] + tx * src[y0 * sw + x1];
            let bottom = (1.0 - tx) * src[y1 * sw + x0] + tx * src[y1 * sw + x1];
            out.push((1.0 - ty) * top + ty * bottom);
        }
    }
    out
}

/// Applies the spatial map of a geometric `spec` to a single plane exactly
/// as the mask path does: bilinear sampling with fill value 0. Returns the
/// warped plane and its dimensions. Binarizing the result of warping a
/// mask's plane reproduces the co-transformed mask bit for bit.
pub fn geometric_plane_warp(
    plane: &[f64],
    width: usize,
    height: usize,
    spec: &AugmentSpec,
) -> Result<(Vec<f64>, usize, usize)> {
    spec.validate()?;
    if !spec.kind.is_geometric() {
        return Err(Error::BadParam(format!(
            "{} is not a geometric kind",
            spec.kind
        )));
    }
    let (dw, dh) = output_dims(spec.kind, spec.param, width, height);
    let map = build_map(spec.kind, spec.param, spec.seed, width, height, dw, dh);
    let data = warp_plane(plane, width, height, dw, dh, 0.0, map.as_ref());
    Ok((data, dw, dh))
}

fn warp_image(img: &ImageBuffer, spec: &AugmentSpec) -> ImageBuffer {
    let (sw, sh) = (img.width(), img.height());
    let (dw, dh) = output_dims(spec.kind, spec.param, sw, sh);
    let map = build_map(spec.kind, spec.param, spec.seed, sw, sh, dw, dh);
    let fill = img.mean_sample();
    let mut data = Vec::with_capacity(3 * dw * dh);
    for c in 0..3 {
        data.extend(warp_plane(img.plane(c), sw, sh, dw, dh, fill, map.as_ref()));
    }
    ImageBuffer::from_data(dw, dh, data)
}

fn warp_mask(mask: &MaskMap, spec: &AugmentSpec) -> Result<MaskMap> {
    let (data, dw, dh) = geometric_plane_warp(mask.data(), mask.width(), mask.height(), spec)?;
    Ok(MaskMap::from_data(dw, dh, data).binarize())
}

fn map_values(img: &ImageBuffer, f: impl Fn(usize, f64) -> f64) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(3 * w * h);
    for c in 0..3 {
        data.extend(img.plane(c).iter().map(|&v| f(c, v).clamp(0.0, 1.0)));
    }
    ImageBuffer::from_data(w, h, data)
}

fn adjust_brightness(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    map_values(img, |_, v| factor * v)
}

fn adjust_contrast(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let lum = img.luma();
    let gray = lum.iter().sum::<f64>() / lum.len() as f64;
    map_values(img, |_, v| gray + factor * (v - gray))
}

fn adjust_saturation(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    let lum = img.luma();
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(3 * w * h);
    for c in 0..3 {
        data.extend(
            img.plane(c)
                .iter()
                .zip(&lum)
                .map(|(&v, &l)| (l + factor * (v - l)).clamp(0.0, 1.0)),
        );
    }
    ImageBuffer::from_data(w, h, data)
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn adjust_hue(img: &ImageBuffer, turns: f64) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = ImageBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (hh, s, v) = rgb_to_hsv(img.get(0, y, x), img.get(1, y, x), img.get(2, y, x));
            let (r, g, b) = hsv_to_rgb(hh + turns, s, v);
            out.set(0, y, x, r);
            out.set(1, y, x, g);
            out.set(2, y, x, b);
        }
    }
    out
}

fn gaussian_kernel(k: usize) -> Vec<f64> {
    let half = (k - 1) / 2;
    let sigma = 0.3 * (half as f64 - 1.0) + 0.8;
    let mut weights: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    weights
}

fn gaussian_blur(img: &ImageBuffer, k: usize) -> ImageBuffer {
    if k == 1 {
        return img.clone();
    }
    let kernel = gaussian_kernel(k);
    let half = ((k - 1) / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = img.clone();
    for c in 0..3 {
        let src = img.plane(c).to_vec();
        // Horizontal pass into a scratch plane, then vertical.
        let mut tmp = vec![0.0f64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &wt) in kernel.iter().enumerate() {
                    let xx = (x + i as isize - half).clamp(0, w - 1);
                    acc += wt * src[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &wt) in kernel.iter().enumerate() {
                    let yy = (y + i as isize - half).clamp(0, h - 1);
                    acc += wt * tmp[(yy * w + x) as usize];
                }
                dst[(y * w + x) as usize] = acc.clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn median_filter(img: &ImageBuffer, k: usize) -> ImageBuffer {
    if k == 1 {
        return img.clone();
    }
    let half = ((k - 1) / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut out = img.clone();
    let mut window = Vec::with_capacity(k * k);
    for c in 0..3 {
        let src = img.plane(c).to_vec();
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                window.clear();
                for dy in -half..=half {
                    for dx in -half..=half {
                        let yy = (y + dy).clamp(0, h - 1);
                        let xx = (x + dx).clamp(0, w - 1);
                        window.push(src[(yy * w + xx) as usize]);
                    }
                }
                window.sort_by(f64::total_cmp);
                dst[(y * w + x) as usize] = window[window.len() / 2];
            }
        }
    }
    out
}

/// Applies one transformation to an image and, when present, its mask.
///
/// Geometric kinds co-transform the mask; valuemetric kinds return it
/// unchanged. Splice kinds are rejected here because they need an explicit
/// background image; call [`splice`] instead.
pub fn apply(
    img: &ImageBuffer,
    mask: Option<&MaskMap>,
    spec: &AugmentSpec,
) -> Result<(ImageBuffer, Option<MaskMap>)> {
    spec.validate()?;
    if let Some(m) = mask {
        img.check_mask_dims(m, "augmentation mask")?;
    }
    use AugmentKind::*;
    match spec.kind {
        SpliceProportion | SpliceCollage => Err(Error::BadParam(format!(
            "{} needs a background image; use the splice operation",
            spec.kind
        ))),
        Identity => Ok((img.clone(), mask.cloned())),
        Hflip | Crop | Resize | Rotate | Perspective => {
            let out = warp_image(img, spec);
            let out_mask = match mask {
                Some(m) => Some(warp_mask(m, spec)?),
                None => None,
            };
            Ok((out, out_mask))
        }
        Brightness => Ok((adjust_brightness(img, spec.param), mask.cloned())),
        Contrast => Ok((adjust_contrast(img, spec.param), mask.cloned())),
        Saturation => Ok((adjust_saturation(img, spec.param), mask.cloned())),
        Hue => Ok((adjust_hue(img, spec.param), mask.cloned())),
        GaussianBlur => Ok((gaussian_blur(img, spec.param as usize), mask.cloned())),
        MedianFilter => Ok((median_filter(img, spec.param as usize), mask.cloned())),
        Jpeg => Ok((jpeg::roundtrip(img, spec.param as u32), mask.cloned())),
    }
}

/// Applies a sequence of transformations in order.
pub fn apply_chain(
    img: &ImageBuffer,
    mask: Option<&MaskMap>,
    specs: &[AugmentSpec],
) -> Result<(ImageBuffer, Option<MaskMap>)> {
    let mut out = img.clone();
    let mut out_mask = mask.cloned();
    for spec in specs {
        let (next, next_mask) = apply(&out, out_mask.as_ref(), spec)?;
        out = next;
        out_mask = next_mask;
    }
    Ok((out, out_mask))
}

/// Pastes a random rectangle of `img_wm`, covering `area_fraction` of the
/// frame, onto `background` at the same location. Returns the spliced image
/// and the mask of the pasted region.
pub fn splice<R: Rng>(
    img_wm: &ImageBuffer,
    background: &ImageBuffer,
    area_fraction: f64,
    rng: &mut R,
) -> Result<(ImageBuffer, MaskMap)> {
    if img_wm.width() != background.width() || img_wm.height() != background.height() {
        return Err(Error::DimensionMismatch {
            what: "splice background",
            expected_w: img_wm.width(),
            expected_h: img_wm.height(),
            got_w: background.width(),
            got_h: background.height(),
        });
    }
    if !(area_fraction > 0.0 && area_fraction <= 1.0) {
        return Err(Error::BadParam(format!(
            "splice area fraction must be in (0,1], got {area_fraction}"
        )));
    }
    let (w, h) = (img_wm.width(), img_wm.height());
    let ratio = area_fraction.sqrt();
    let rh = ((ratio * h as f64).round() as usize).clamp(1, h);
    let rw = ((ratio * w as f64).round() as usize).clamp(1, w);
    let y0 = rng.random_range(0..=h - rh);
    let x0 = rng.random_range(0..=w - rw);
    let mut out = background.clone();
    for c in 0..3 {
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                out.set(c, y, x, img_wm.get(c, y, x));
            }
        }
    }
    let mut mask = MaskMap::zeros(w, h);
    mask.fill_rect(y0, x0, rh, rw);
    Ok((out, mask))
}

/// Copies a rectangular window out of an image (exact index copy).
pub fn crop_region(img: &ImageBuffer, y0: usize, x0: usize, h: usize, w: usize) -> ImageBuffer {
    assert!(y0 + h <= img.height() && x0 + w <= img.width());
    let mut data = Vec::with_capacity(3 * w * h);
    for c in 0..3 {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                data.push(img.get(c, y, x));
            }
        }
    }
    ImageBuffer::from_data(w, h, data)
}

/// Copies a rectangular window out of a mask (exact index copy).
pub fn crop_mask_region(mask: &MaskMap, y0: usize, x0: usize, h: usize, w: usize) -> MaskMap {
    assert!(y0 + h <= mask.height() && x0 + w <= mask.width());
    let mut data = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            data.push(mask.get(y, x));
        }
    }
    MaskMap::from_data(w, h, data)
}

/// Bilinear resize of an image to exact output dimensions.
pub fn resize_to(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    let mut data = Vec::with_capacity(3 * width * height);
    for c in 0..3 {
        data.extend(resize_bilinear_plane(
            img.plane(c),
            img.width(),
            img.height(),
            width,
            height,
        ));
    }
    ImageBuffer::from_data(width, height, data)
}

/// Bilinear resize of a mask to exact output dimensions, binarized.
pub fn resize_mask_to(mask: &MaskMap, width: usize, height: usize) -> MaskMap {
    let data = resize_bilinear_plane(mask.data(), mask.width(), mask.height(), width, height);
    MaskMap::from_data(width, height, data).binarize()
}
