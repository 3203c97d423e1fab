//! Decision layer on top of the per-pixel extractor output.
//!
//! A pixel counts as watermarked when its detection probability exceeds the
//! pixel threshold tau. The image-level score is the fraction of such pixels;
//! an image is flagged when that fraction exceeds the image threshold. The
//! global message decode averages each bit's probability plane over the
//! selected pixels and thresholds the mean at 1/2. For images carrying
//! several watermarks, each selected pixel is hard-decoded on its own and the
//! resulting bit strings are clustered.
//!
//! The pixel threshold is calibrated empirically: pool detection
//! probabilities from unwatermarked images and take the quantile matching a
//! target per-pixel false-positive rate.

use crate::cluster::{dbscan, ClusterInfo, DbscanParams};
use crate::codec::ExtractorOutput;
use crate::error::{Error, Result};
use crate::raster::{MaskMap, Message};

/// Default image-level threshold on the fraction of watermarked pixels.
pub const DEFAULT_TAU_IMAGE: f64 = 0.07;

/// Image-level detection outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Fraction of pixels whose detection probability exceeds tau.
    pub score: f64,
    /// Whether the score exceeds the image threshold.
    pub flagged: bool,
}

/// Fraction of pixels with detection probability strictly above `tau`.
pub fn detection_score(out: &ExtractorOutput, tau: f64) -> f64 {
    let det = out.det();
    let hits = det.iter().filter(|&&y| y > tau).count();
    hits as f64 / det.len() as f64
}

/// Binary localization mask: on where the detection probability exceeds
/// `tau`.
pub fn detection_mask(out: &ExtractorOutput, tau: f64) -> MaskMap {
    let data = out.det().iter().map(|&y| (y > tau) as u8 as f64).collect();
    MaskMap::from_data(out.width(), out.height(), data)
}

/// Image-level decision: flagged when the watermarked-pixel fraction is
/// strictly above `tau_image`.
pub fn detect(out: &ExtractorOutput, tau: f64, tau_image: f64) -> Detection {
    let score = detection_score(out, tau);
    Detection {
        score,
        flagged: score > tau_image,
    }
}

/// Decodes the single global message over the pixels selected by `tau`.
///
/// Bit k is 1 when the mean of its probability plane over the selected
/// pixels is strictly above 1/2. Fails when no pixel is selected.
pub fn decode(out: &ExtractorOutput, tau: f64) -> Result<Message> {
    let det = out.det();
    let selected: Vec<usize> = (0..det.len()).filter(|&i| det[i] > tau).collect();
    if selected.is_empty() {
        return Err(Error::NoWatermarkedPixels);
    }
    let mut bits = Vec::with_capacity(out.n_bits());
    for k in 0..out.n_bits() {
        let plane = out.dec(k);
        let mean: f64 = selected.iter().map(|&i| plane[i]).sum::<f64>() / selected.len() as f64;
        bits.push((mean > 0.5) as u8);
    }
    Ok(Message::new(bits))
}

/// Hard-decodes every selected pixel into its own bit string.
///
/// Returns the selected pixel indices (row-major) and one message per index;
/// per pixel, bit k is 1 when its probability is strictly above 1/2.
pub fn pixel_messages(out: &ExtractorOutput, tau: f64) -> (Vec<usize>, Vec<Message>) {
    let det = out.det();
    let selected: Vec<usize> = (0..det.len()).filter(|&i| det[i] > tau).collect();
    let planes: Vec<&[f64]> = (0..out.n_bits()).map(|k| out.dec(k)).collect();
    let messages = selected
        .iter()
        .map(|&i| Message::new(planes.iter().map(|p| (p[i] > 0.5) as u8).collect()))
        .collect();
    (selected, messages)
}

/// How a pixel ended up in a multi-watermark decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelAssignment {
    /// Member of the cluster with this index.
    Cluster(usize),
    /// Selected as watermarked but not absorbed by any cluster.
    Noise,
    /// Below the detection threshold.
    Unmarked,
}

/// Multi-watermark decode result.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDecode {
    /// Recovered clusters, largest first.
    pub clusters: Vec<ClusterInfo>,
    /// Row-major per-pixel assignment.
    pub assignment: Vec<PixelAssignment>,
}

/// Separates several watermarks: selects pixels by `tau`, hard-decodes each,
/// and clusters the bit strings.
pub fn decode_multi(
    out: &ExtractorOutput,
    tau: f64,
    params: &DbscanParams,
) -> Result<MultiDecode> {
    let (selected, messages) = pixel_messages(out, tau);
    let clustering = dbscan(&messages, params)?;
    let mut assignment = vec![PixelAssignment::Unmarked; out.width() * out.height()];
    for (&pixel, label) in selected.iter().zip(&clustering.labels) {
        assignment[pixel] = match label {
            Some(l) => PixelAssignment::Cluster(*l),
            None => PixelAssignment::Noise,
        };
    }
    Ok(MultiDecode {
        clusters: clustering.clusters,
        assignment,
    })
}

/// Calibrates the pixel threshold to a target per-pixel false-positive rate.
///
/// `scores` pools detection probabilities from known-unwatermarked images.
/// The threshold is the (1 - target_fpr) quantile with linear interpolation:
/// with the scores sorted ascending, position (1-fpr)*(N-1) is read off,
/// interpolating between the straddling samples. Requires at least
/// 10/target_fpr pooled scores so the tail quantile is supported by data.
pub fn calibrate_tau(scores: &[f64], target_fpr: f64) -> Result<f64> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::BadParam(format!(
            "target false-positive rate must be in (0,1), got {target_fpr}"
        )));
    }
    let need = (10.0 / target_fpr).ceil() as usize;
    if scores.len() < need {
        return Err(Error::InsufficientPixels {
            got: scores.len(),
            need,
            target_fpr,
        });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (1.0 - target_fpr) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}
