//! Quality and accuracy metrics plus the evaluation report container.
//!
//! Image fidelity: PSNR on the [0,1] sample scale and SSIM with the standard
//! 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03, dynamic range 1),
//! averaged over valid window positions and channels. Decoding quality: bit
//! accuracy, two-class mean IoU for localization, true and false positive
//! rates for whole-image flagging, and the two training-style losses of the
//! extractor (per-pixel detection cross-entropy and mask-gated decoding
//! cross-entropy), which double as diagnostics here.
//!
//! Reports serialize to JSON and CSV. serde_json renders non-finite floats
//! (such as the infinite PSNR of identical images) as `null`; the CSV writer
//! spells them `inf`/`nan`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::codec::ExtractorOutput;
use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, MaskMap, Message};

/// Floor applied inside logarithms of the cross-entropy losses.
const LOG_EPS: f64 = 1e-7;

fn check_image_dims(a: &ImageBuffer, b: &ImageBuffer, what: &'static str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            what,
            expected_w: a.width(),
            expected_h: a.height(),
            got_w: b.width(),
            got_h: b.height(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB between two images on the [0,1] scale.
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_image_dims(a, b, "psnr operand")?;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Normalized 11-tap Gaussian (sigma 1.5) used as the SSIM window.
fn ssim_window() -> [f64; 11] {
    let sigma = 1.5f64;
    let mut w = [0.0f64; 11];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - 5.0;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let sum: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Structural similarity averaged over all valid 11x11 window positions and
/// the three channels. Both images must be at least 11x11.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_image_dims(a, b, "ssim operand")?;
    let (w, h) = (a.width(), a.height());
    if w < 11 || h < 11 {
        return Err(Error::BadParam(format!(
            "ssim needs at least 11x11 pixels, got {w}x{h}"
        )));
    }
    let window = ssim_window();
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let pa = a.plane(c);
        let pb = b.plane(c);
        // Separable weighted moments: horizontal pass then vertical pass
        // over the five products needed by the SSIM formula.
        let hw = w - 10;
        let hh = h - 10;
        let mut rows = vec![[0.0f64; 5]; hw * h];
        for y in 0..h {
            for x in 0..hw {
                let mut acc = [0.0f64; 5];
                for (i, &wt) in window.iter().enumerate() {
                    let va = pa[y * w + x + i];
                    let vb = pb[y * w + x + i];
                    acc[0] += wt * va;
                    acc[1] += wt * vb;
                    acc[2] += wt * va * va;
                    acc[3] += wt * vb * vb;
                    acc[4] += wt * va * vb;
                }
                rows[y * hw + x] = acc;
            }
        }
        for y in 0..hh {
            for x in 0..hw {
                let mut m = [0.0f64; 5];
                for (i, &wt) in window.iter().enumerate() {
                    let r = &rows[(y + i) * hw + x];
                    for k in 0..5 {
                        m[k] += wt * r[k];
                    }
                }
                let (mu_a, mu_b) = (m[0], m[1]);
                let var_a = m[2] - mu_a * mu_a;
                let var_b = m[3] - mu_b * mu_b;
                let cov = m[4] - mu_a * mu_b;
                let val = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += val;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Fraction of matching bits between two equal-length messages.
pub fn bit_accuracy(a: &Message, b: &Message) -> Result<f64> {
    if a.n_bits() != b.n_bits() {
        return Err(Error::MessageLength {
            expected: a.n_bits(),
            got: b.n_bits(),
        });
    }
    Ok(1.0 - a.hamming(b) as f64 / a.n_bits() as f64)
}

/// Two-class (watermarked / clean) mean intersection-over-union between a
/// predicted mask and the ground truth. A class absent from both masks
/// contributes a perfect score of 1.
pub fn miou(pred: &MaskMap, truth: &MaskMap) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::DimensionMismatch {
            what: "miou operand",
            expected_w: truth.width(),
            expected_h: truth.height(),
            got_w: pred.width(),
            got_h: pred.height(),
        });
    }
    let mut inter = [0usize; 2];
    let mut union = [0usize; 2];
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        let p = (p > 0.5) as usize;
        let t = (t > 0.5) as usize;
        if p == 1 || t == 1 {
            union[1] += 1;
            inter[1] += (p == 1 && t == 1) as usize;
        }
        if p == 0 || t == 0 {
            union[0] += 1;
            inter[0] += (p == 0 && t == 0) as usize;
        }
    }
    let iou = |cls: usize| {
        if union[cls] == 0 {
            1.0
        } else {
            inter[cls] as f64 / union[cls] as f64
        }
    };
    Ok(0.5 * (iou(0) + iou(1)))
}

/// True and false positive rates of per-image flags against labels.
/// Errors when either class is empty, since its rate is undefined.
pub fn tpr_fpr(flags: &[bool], labels: &[bool]) -> Result<(f64, f64)> {
    if flags.len() != labels.len() {
        return Err(Error::BadParam(format!(
            "tpr_fpr needs matching lengths, got {} flags and {} labels",
            flags.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::EmptyClass { metric: "tpr" });
    }
    if negatives == 0 {
        return Err(Error::EmptyClass { metric: "fpr" });
    }
    let tp = flags
        .iter()
        .zip(labels)
        .filter(|&(&f, &l)| f && l)
        .count();
    let fp = flags
        .iter()
        .zip(labels)
        .filter(|&(&f, &l)| f && !l)
        .count();
    Ok((tp as f64 / positives as f64, fp as f64 / negatives as f64))
}

fn bce(prob: f64, target: f64) -> f64 {
    let p = prob.clamp(LOG_EPS, 1.0 - LOG_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Per-pixel detection cross-entropy between the detection plane and a
/// binary mask, averaged over all pixels.
pub fn loss_det(out: &ExtractorOutput, mask: &MaskMap) -> Result<f64> {
    if out.width() != mask.width() || out.height() != mask.height() {
        return Err(Error::DimensionMismatch {
            what: "loss_det mask",
            expected_w: out.width(),
            expected_h: out.height(),
            got_w: mask.width(),
            got_h: mask.height(),
        });
    }
    let det = out.det();
    let total: f64 = det
        .iter()
        .zip(mask.data())
        .map(|(&y, &m)| bce(y, (m > 0.5) as usize as f64))
        .sum();
    Ok(total / det.len() as f64)
}

/// Mask-gated decoding cross-entropy. Each (mask, message) pair contributes
/// the cross-entropy between every decoding plane and its target bit, summed
/// over the pair's watermarked pixels and normalized by bit count times
/// pixel count; pairs are summed. Pixels outside every mask contribute
/// exactly nothing.
pub fn loss_dec(out: &ExtractorOutput, pairs: &[(&MaskMap, &Message)]) -> Result<f64> {
    let mut total = 0.0;
    for (mask, msg) in pairs {
        if out.width() != mask.width() || out.height() != mask.height() {
            return Err(Error::DimensionMismatch {
                what: "loss_dec mask",
                expected_w: out.width(),
                expected_h: out.height(),
                got_w: mask.width(),
                got_h: mask.height(),
            });
        }
        if msg.n_bits() != out.n_bits() {
            return Err(Error::MessageLength {
                expected: out.n_bits(),
                got: msg.n_bits(),
            });
        }
        let pixels = mask.count_ones();
        if pixels == 0 {
            return Err(Error::NoWatermarkedPixels);
        }
        let mut pair_sum = 0.0;
        for k in 0..out.n_bits() {
            let plane = out.dec(k);
            let target = msg.bit(k) as f64;
            for (&y, &m) in plane.iter().zip(mask.data()) {
                if m > 0.5 {
                    pair_sum += bce(y, target);
                }
            }
        }
        total += pair_sum / (out.n_bits() * pixels) as f64;
    }
    Ok(total)
}

/// One labeled row of an evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    /// What was measured, e.g. an augmentation name with its parameter.
    pub scenario: String,
    /// Metric name to value. Non-finite values serialize to JSON `null`
    /// and read back as NaN.
    #[serde(deserialize_with = "deserialize_metrics")]
    pub metrics: BTreeMap<String, f64>,
    /// Free-form caveats, e.g. metrics that do not apply.
    pub notes: String,
}

impl EvalRow {
    pub fn new(scenario: impl Into<String>) -> Self {
        EvalRow {
            scenario: scenario.into(),
            metrics: BTreeMap::new(),
            notes: String::new(),
        }
    }

    pub fn metric(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes = note.into();
        self
    }
}

/// A set of evaluation rows plus enough provenance to reproduce them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Tool name and version that produced the report.
    pub tool: String,
    /// Unix timestamp of creation.
    pub created_unix: u64,
    /// Run parameters: key fingerprint, seeds, corpus, thresholds.
    pub config: BTreeMap<String, String>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new() -> Self {
        EvalReport {
            tool: format!("pixseal {}", env!("CARGO_PKG_VERSION")),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: BTreeMap::new(),
            rows: Vec::new(),
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn push(&mut self, row: EvalRow) {
        self.rows.push(row);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Flat CSV: scenario column, one column per metric name present
    /// anywhere (sorted), and a trailing notes column. Missing cells stay
    /// empty; non-finite values print as `inf`, `-inf`, or `nan`.
    pub fn to_csv(&self) -> String {
        let mut names: Vec<&str> = Vec::new();
        for row in &self.rows {
            for name in row.metrics.keys() {
                if !names.contains(&name.as_str()) {
                    names.push(name);
                }
            }
        }
        names.sort_unstable();
        let mut out = String::from("scenario");
        for name in &names {
            let _ = write!(out, ",{name}");
        }
        out.push_str(",notes\n");
        for row in &self.rows {
            out.push_str(&csv_field(&row.scenario));
            for name in &names {
                out.push(',');
                if let Some(&v) = row.metrics.get(*name) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push(',');
            out.push_str(&csv_field(&row.notes));
            out.push('\n');
        }
        out
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_text(path.as_ref(), &self.to_json())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }
}

impl Default for EvalReport {
    fn default() -> Self {
        Self::new()
    }
}

fn deserialize_metrics<'de, D>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw: BTreeMap<String, Option<f64>> = Deserialize::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (k, v.unwrap_or(f64::NAN)))
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
