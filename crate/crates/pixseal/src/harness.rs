//! End-to-end evaluation scenarios: localization quality, multi-watermark
//! separation, robustness under transformations, and a clustering parameter
//! sweep. Every scenario takes a prepared image corpus, derives its own
//! ground truth analytically (centered rectangles or the five-square
//! protocol layout), and returns an [`EvalReport`].
//!
//! Scenarios parallelize over images with rayon; all randomness is derived
//! from explicit seeds, so reports are reproducible run to run.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::augment::{apply_chain, AugmentSpec};
use crate::carrier::WatermarkKey;
use crate::cluster::DbscanParams;
use crate::codec::{embed, embed_multi, extract, EmbedConfig, ExtractConfig};
use crate::detect::{calibrate_tau, decode, decode_multi, detect, detection_mask, PixelAssignment};
use crate::error::{Error, Result};
use crate::maskgen::protocol_squares;
use crate::metrics::{bit_accuracy, miou, psnr, EvalReport, EvalRow};
use crate::raster::{ImageBuffer, MaskMap, Message};

/// Extraction window used by the multi-watermark protocol: exactly one
/// carrier tile. The detection taper around a region extends about half a
/// window beyond its boundary, so the smallest workable window keeps
/// region boundaries sharp and localization IoU high.
pub const PROTOCOL_WINDOW: usize = 8;

/// Pixel selection threshold of the multi-watermark protocol (the balanced
/// point of the logistic detection output).
pub const PROTOCOL_TAU: f64 = 0.5;

/// Clustering parameters of the multi-watermark protocol.
pub const PROTOCOL_DBSCAN: DbscanParams = DbscanParams {
    epsilon: 1,
    min_samples: 1000,
    compute_medoid: false,
};

/// Per-pixel false-positive rate used for internal threshold calibration.
const CALIBRATION_FPR: f64 = 1e-3;

fn per_image_rng(seed: u64, index: usize) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Centered rectangle covering `fraction` of the frame area (per-axis side
/// = floor(sqrt(fraction) * dim)).
pub fn centered_fraction_mask(height: usize, width: usize, fraction: f64) -> MaskMap {
    let side_h = ((fraction.sqrt() * height as f64).floor() as usize).clamp(1, height);
    let side_w = ((fraction.sqrt() * width as f64).floor() as usize).clamp(1, width);
    let mut mask = MaskMap::zeros(width, height);
    mask.fill_rect((height - side_h) / 2, (width - side_w) / 2, side_h, side_w);
    mask
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Calibrates the pixel threshold on unwatermarked images.
fn calibrate_on_originals(images: &[ImageBuffer], key: &WatermarkKey, cfg: &ExtractConfig) -> Result<f64> {
    let pools: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| extract(img, key, cfg).map(|out| out.det().to_vec()))
        .collect::<Result<_>>()?;
    let pool: Vec<f64> = pools.into_iter().flatten().collect();
    calibrate_tau(&pool, CALIBRATION_FPR)
}

/// Localization quality over mask area fractions.
///
/// For every image and fraction, embeds a fresh random message into a
/// centered rectangle of that area, predicts the watermarked region by
/// thresholding the detection plane at a threshold calibrated on the
/// original images, and reports mean IoU, bit accuracy over the predicted
/// region, and embedding PSNR. With `with_crop`, each fraction gains a second
/// row where the watermarked image is cropped to its upper-left quarter and
/// resized back before extraction, with the ground truth undergoing the
/// same spatial map.
pub fn run_localization(
    images: &[ImageBuffer],
    key: &WatermarkKey,
    fractions: &[f64],
    with_crop: bool,
    seed: u64,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::BadParam("localization needs at least one image".into()));
    }
    let ecfg = EmbedConfig::default();
    let xcfg = ExtractConfig::default();
    let tau = calibrate_on_originals(images, key, &xcfg)?;

    let mut report = EvalReport::new();
    report.set_config("scenario", "localization");
    report.set_config("images", images.len());
    report.set_config("n_bits", key.n_bits());
    report.set_config("tau", tau);
    report.set_config("seed", seed);

    struct Sample {
        miou_plain: f64,
        acc_plain: f64,
        psnr_plain: f64,
        miou_crop: f64,
        acc_crop: f64,
        fallback_plain: bool,
        fallback_crop: bool,
    }

    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::BadParam(format!(
                "mask area fraction must be in (0,1], got {fraction}"
            )));
        }
        let samples: Vec<Sample> = images
            .par_iter()
            .enumerate()
            .map(|(i, img)| -> Result<Sample> {
                let (w, h) = (img.width(), img.height());
                let mut rng = per_image_rng(seed, i);
                let msg = Message::random(&mut rng, key.n_bits());
                let gt = centered_fraction_mask(h, w, fraction);
                let wm = embed(img, &gt, key, &msg, &ecfg)?;
                let out = extract(&wm, key, &xcfg)?;
                let pred = detection_mask(&out, tau);
                let miou_plain = miou(&pred, &gt)?;
                let (acc_plain, fallback_plain) = match decode(&out, tau) {
                    Ok(decoded) => (bit_accuracy(&decoded, &msg)?, false),
                    Err(Error::NoWatermarkedPixels) => (0.5, true),
                    Err(e) => return Err(e),
                };
                let psnr_plain = psnr(img, &wm)?;

                let mut fallback_crop = false;
                let (miou_crop, acc_crop) = if with_crop {
                    // Upper-left quarter (25% of the area), resized back.
                    let cropped = crate::augment::crop_region(&wm, 0, 0, h / 2, w / 2);
                    let restored = crate::augment::resize_to(&cropped, w, h);
                    let gt_crop = crate::augment::crop_mask_region(&gt, 0, 0, h / 2, w / 2);
                    let gt_restored = crate::augment::resize_mask_to(&gt_crop, w, h);
                    let out_c = extract(&restored, key, &xcfg)?;
                    let pred_c = detection_mask(&out_c, tau);
                    let m = miou(&pred_c, &gt_restored)?;
                    let acc = match decode(&out_c, tau) {
                        Ok(decoded) => bit_accuracy(&decoded, &msg)?,
                        Err(Error::NoWatermarkedPixels) => {
                            fallback_crop = true;
                            0.5
                        }
                        Err(e) => return Err(e),
                    };
                    (m, acc)
                } else {
                    (f64::NAN, f64::NAN)
                };
                Ok(Sample {
                    miou_plain,
                    acc_plain,
                    psnr_plain,
                    miou_crop,
                    acc_crop,
                    fallback_plain,
                    fallback_crop,
                })
            })
            .collect::<Result<_>>()?;

        let fallback_note = |count: usize| {
            if count > 0 {
                format!("{count} images decoded no pixels; their bit accuracy counts 0.5")
            } else {
                String::new()
            }
        };
        report.push(
            EvalRow::new(format!("fraction:{fraction}"))
                .metric("miou", mean(&samples.iter().map(|s| s.miou_plain).collect::<Vec<_>>()))
                .metric("bit_acc", mean(&samples.iter().map(|s| s.acc_plain).collect::<Vec<_>>()))
                .metric("psnr", mean(&samples.iter().map(|s| s.psnr_plain).collect::<Vec<_>>()))
                .note(fallback_note(samples.iter().filter(|s| s.fallback_plain).count())),
        );
        if with_crop {
            report.push(
                EvalRow::new(format!("fraction:{fraction}+crop"))
                    .metric("miou", mean(&samples.iter().map(|s| s.miou_crop).collect::<Vec<_>>()))
                    .metric("bit_acc", mean(&samples.iter().map(|s| s.acc_crop).collect::<Vec<_>>()))
                    .note(fallback_note(samples.iter().filter(|s| s.fallback_crop).count())),
            );
        }
    }
    Ok(report)
}

/// Result of one multi-watermark protocol image.
#[derive(Debug, Clone)]
pub struct MultiWmSample {
    /// Number of clusters found.
    pub clusters: usize,
    /// Mean bit accuracy of cluster centroids against their best-overlap
    /// ground-truth message.
    pub bit_acc: f64,
    /// Two-class IoU of the union of cluster pixels against the union of
    /// ground-truth regions.
    pub union_miou: f64,
}

/// Runs the five-square protocol (or fewer squares for smaller counts) on
/// every image: distinct random messages per region, joint embedding,
/// optional augmentation chain, extraction at [`PROTOCOL_WINDOW`], and
/// cluster separation at [`PROTOCOL_TAU`].
pub fn run_multiwm(
    images: &[ImageBuffer],
    key: &WatermarkKey,
    n_messages: usize,
    chain: &[AugmentSpec],
    seed: u64,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::BadParam("multi-watermark run needs at least one image".into()));
    }
    if !(1..=5).contains(&n_messages) {
        return Err(Error::BadParam(format!(
            "message count must be 1..=5, got {n_messages}"
        )));
    }
    let ecfg = EmbedConfig::default();
    let xcfg = ExtractConfig {
        window: PROTOCOL_WINDOW,
        ..ExtractConfig::default()
    };

    let samples: Vec<MultiWmSample> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| -> Result<MultiWmSample> {
            let (w, h) = (img.width(), img.height());
            let mut rng = per_image_rng(seed, i);
            let masks = protocol_squares(h, w, n_messages)?;
            let mut msgs: Vec<Message> = Vec::with_capacity(n_messages);
            while msgs.len() < n_messages {
                let m = Message::random(&mut rng, key.n_bits());
                if !msgs.contains(&m) {
                    msgs.push(m);
                }
            }
            let pairs: Vec<(&MaskMap, &Message)> =
                masks.iter().zip(&msgs).map(|(m, s)| (m, s)).collect();
            let wm = embed_multi(img, &pairs, key, &ecfg)?;

            // Transform the image once and every ground-truth region
            // through the identical chain.
            let (wm, _) = apply_chain(&wm, None, chain)?;
            let mut gt_masks = Vec::with_capacity(n_messages);
            for mask in &masks {
                let (_, transformed) = apply_chain(img, Some(mask), chain)?;
                gt_masks.push(transformed.expect("mask passed in, mask comes out"));
            }

            let out = extract(&wm, key, &xcfg)?;
            let md = decode_multi(&out, PROTOCOL_TAU, &PROTOCOL_DBSCAN)?;

            let (out_w, out_h) = (out.width(), out.height());
            let mut gt_union = MaskMap::zeros(out_w, out_h);
            for m in &gt_masks {
                for (d, s) in gt_union.data_mut().iter_mut().zip(m.data()) {
                    *d = d.max(*s);
                }
            }
            let mut pred_union = MaskMap::zeros(out_w, out_h);
            let mut accs = Vec::new();
            for (ci, info) in md.clusters.iter().enumerate() {
                let mut overlaps = vec![0usize; n_messages];
                for (pix, a) in md.assignment.iter().enumerate() {
                    if *a == PixelAssignment::Cluster(ci) {
                        pred_union.data_mut()[pix] = 1.0;
                        for (mi, m) in gt_masks.iter().enumerate() {
                            if m.data()[pix] == 1.0 {
                                overlaps[mi] += 1;
                            }
                        }
                    }
                }
                let best = (0..n_messages).max_by_key(|&mi| overlaps[mi]).unwrap();
                accs.push(bit_accuracy(&info.centroid, &msgs[best])?);
            }
            Ok(MultiWmSample {
                clusters: md.clusters.len(),
                bit_acc: mean(&accs),
                union_miou: miou(&pred_union, &gt_union)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = EvalReport::new();
    report.set_config("scenario", "multi-watermark");
    report.set_config("images", images.len());
    report.set_config("n_messages", n_messages);
    report.set_config("window", PROTOCOL_WINDOW);
    report.set_config("tau", PROTOCOL_TAU);
    report.set_config("seed", seed);
    report.set_config(
        "chain",
        if chain.is_empty() { "identity".to_string() } else { chain_name(chain) },
    );
    let exact = samples.iter().filter(|s| s.clusters == n_messages).count();
    report.push(
        EvalRow::new(format!("k:{n_messages}"))
            .metric("mean_clusters", mean(&samples.iter().map(|s| s.clusters as f64).collect::<Vec<_>>()))
            .metric("fraction_exact", exact as f64 / samples.len() as f64)
            .metric("bit_acc", mean(&samples.iter().filter(|s| s.bit_acc.is_finite()).map(|s| s.bit_acc).collect::<Vec<_>>()))
            .metric("union_miou", mean(&samples.iter().map(|s| s.union_miou).collect::<Vec<_>>())),
    );
    Ok(report)
}

/// Human-readable name of an augmentation chain.
pub fn chain_name(chain: &[AugmentSpec]) -> String {
    if chain.is_empty() {
        return "identity".to_string();
    }
    chain
        .iter()
        .map(|s| match s.kind {
            crate::augment::AugmentKind::Identity | crate::augment::AugmentKind::Hflip => {
                s.kind.to_string()
            }
            _ => format!("{}:{}", s.kind, s.param),
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Whole-image detection and decoding robustness under augmentation chains.
///
/// Positives carry `msg` across the full frame; negatives stay clean. Both
/// groups undergo each chain before extraction. Each row reports the true
/// positive rate at (`tau`, `tau_image`), the false positive rate, and the
/// mean bit accuracy decoded over detected pixels. With no positives the
/// TPR and bit accuracy are NaN (null in JSON); with no negatives the FPR
/// is NaN.
pub fn run_robustness(
    positives: &[ImageBuffer],
    negatives: &[ImageBuffer],
    key: &WatermarkKey,
    msg: &Message,
    chains: &[Vec<AugmentSpec>],
    tau: f64,
    tau_image: f64,
) -> Result<EvalReport> {
    if positives.is_empty() && negatives.is_empty() {
        return Err(Error::BadParam("robustness run needs images".into()));
    }
    let ecfg = EmbedConfig::default();
    let xcfg = ExtractConfig::default();

    let mut report = EvalReport::new();
    report.set_config("scenario", "robustness");
    report.set_config("positives", positives.len());
    report.set_config("negatives", negatives.len());
    report.set_config("tau", tau);
    report.set_config("tau_image", tau_image);
    report.set_config("message", msg.to_hex());

    for chain in chains {
        let pos_results: Vec<(bool, f64, bool)> = positives
            .par_iter()
            .map(|img| -> Result<(bool, f64, bool)> {
                let full = MaskMap::ones(img.width(), img.height());
                let wm = embed(img, &full, key, msg, &ecfg)?;
                let (aug, _) = apply_chain(&wm, None, chain)?;
                let out = extract(&aug, key, &xcfg)?;
                let flagged = detect(&out, tau, tau_image).flagged;
                match decode(&out, tau) {
                    Ok(decoded) => Ok((flagged, bit_accuracy(&decoded, msg)?, false)),
                    Err(Error::NoWatermarkedPixels) => Ok((flagged, 0.5, true)),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let neg_flags: Vec<bool> = negatives
            .par_iter()
            .map(|img| -> Result<bool> {
                let (aug, _) = apply_chain(img, None, chain)?;
                let out = extract(&aug, key, &xcfg)?;
                Ok(detect(&out, tau, tau_image).flagged)
            })
            .collect::<Result<_>>()?;

        let tpr = if pos_results.is_empty() {
            f64::NAN
        } else {
            pos_results.iter().filter(|r| r.0).count() as f64 / pos_results.len() as f64
        };
        let fpr = if neg_flags.is_empty() {
            f64::NAN
        } else {
            neg_flags.iter().filter(|&&f| f).count() as f64 / neg_flags.len() as f64
        };
        let accs: Vec<f64> = pos_results.iter().map(|r| r.1).collect();
        let fallbacks = pos_results.iter().filter(|r| r.2).count();
        let mut notes = Vec::new();
        if pos_results.is_empty() {
            notes.push("no positives: tpr and bit_acc not applicable".to_string());
        }
        if neg_flags.is_empty() {
            notes.push("no negatives: fpr not applicable".to_string());
        }
        if fallbacks > 0 {
            notes.push(format!(
                "{fallbacks} positives decoded no pixels; their bit accuracy counts 0.5"
            ));
        }
        report.push(
            EvalRow::new(chain_name(chain))
                .metric("tpr", tpr)
                .metric("fpr", fpr)
                .metric("bit_acc", mean(&accs))
                .note(notes.join("; ")),
        );
    }
    Ok(report)
}

/// Sweeps DBSCAN parameters on the multi-watermark protocol (optionally
/// after an augmentation chain) and reports the same statistics per
/// combination, marking the protocol default.
pub fn run_dbscan_grid(
    images: &[ImageBuffer],
    key: &WatermarkKey,
    n_messages: usize,
    chain: &[AugmentSpec],
    epsilons: &[usize],
    min_samples: &[usize],
    seed: u64,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::BadParam("parameter sweep needs images".into()));
    }
    if !(1..=5).contains(&n_messages) {
        return Err(Error::BadParam(format!(
            "message count must be 1..=5, got {n_messages}"
        )));
    }
    let ecfg = EmbedConfig::default();
    let xcfg = ExtractConfig {
        window: PROTOCOL_WINDOW,
        ..ExtractConfig::default()
    };

    // Embed and extract once per image; cluster per parameter combination.
    struct Prepared {
        out: crate::codec::ExtractorOutput,
        masks: Vec<MaskMap>,
        msgs: Vec<Message>,
    }
    let prepared: Vec<Prepared> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| -> Result<Prepared> {
            let mut rng = per_image_rng(seed, i);
            let masks = protocol_squares(img.height(), img.width(), n_messages)?;
            let mut msgs: Vec<Message> = Vec::with_capacity(n_messages);
            while msgs.len() < n_messages {
                let m = Message::random(&mut rng, key.n_bits());
                if !msgs.contains(&m) {
                    msgs.push(m);
                }
            }
            let pairs: Vec<(&MaskMap, &Message)> =
                masks.iter().zip(&msgs).map(|(m, s)| (m, s)).collect();
            let wm = embed_multi(img, &pairs, key, &ecfg)?;
            let (wm, _) = apply_chain(&wm, None, chain)?;
            let mut gt_masks = Vec::with_capacity(n_messages);
            for mask in &masks {
                let (_, transformed) = apply_chain(img, Some(mask), chain)?;
                gt_masks.push(transformed.expect("mask passed in, mask comes out"));
            }
            let out = extract(&wm, key, &xcfg)?;
            Ok(Prepared { out, masks: gt_masks, msgs })
        })
        .collect::<Result<_>>()?;

    let mut report = EvalReport::new();
    report.set_config("scenario", "dbscan-grid");
    report.set_config("images", images.len());
    report.set_config("n_messages", n_messages);
    report.set_config("window", PROTOCOL_WINDOW);
    report.set_config("tau", PROTOCOL_TAU);
    report.set_config("seed", seed);
    report.set_config(
        "chain",
        if chain.is_empty() { "identity".to_string() } else { chain_name(chain) },
    );

    for &eps in epsilons {
        for &min in min_samples {
            let params = DbscanParams {
                epsilon: eps,
                min_samples: min,
                compute_medoid: false,
            };
            let mut clusters_total = 0.0;
            let mut exact = 0usize;
            let mut accs = Vec::new();
            let mut mious = Vec::new();
            for p in &prepared {
                let md = decode_multi(&p.out, PROTOCOL_TAU, &params)?;
                clusters_total += md.clusters.len() as f64;
                if md.clusters.len() == n_messages {
                    exact += 1;
                }
                let (w, h) = (p.out.width(), p.out.height());
                let mut gt_union = MaskMap::zeros(w, h);
                for m in &p.masks {
                    for (d, s) in gt_union.data_mut().iter_mut().zip(m.data()) {
                        *d = d.max(*s);
                    }
                }
                let mut pred_union = MaskMap::zeros(w, h);
                for (ci, info) in md.clusters.iter().enumerate() {
                    let mut overlaps = vec![0usize; n_messages];
                    for (pix, a) in md.assignment.iter().enumerate() {
                        if *a == PixelAssignment::Cluster(ci) {
                            pred_union.data_mut()[pix] = 1.0;
                            for (mi, m) in p.masks.iter().enumerate() {
                                if m.data()[pix] == 1.0 {
                                    overlaps[mi] += 1;
                                }
                            }
                        }
                    }
                    let best = (0..n_messages).max_by_key(|&mi| overlaps[mi]).unwrap();
                    accs.push(bit_accuracy(&info.centroid, &p.msgs[best])?);
                }
                mious.push(miou(&pred_union, &gt_union)?);
            }
            let selected = params.epsilon == PROTOCOL_DBSCAN.epsilon
                && params.min_samples == PROTOCOL_DBSCAN.min_samples;
            report.push(
                EvalRow::new(format!("eps:{eps},min_samples:{min}"))
                    .metric("mean_clusters", clusters_total / prepared.len() as f64)
                    .metric("fraction_exact", exact as f64 / prepared.len() as f64)
                    .metric("bit_acc", mean(&accs))
                    .metric("union_miou", mean(&mious))
                    .metric("selected", if selected { 1.0 } else { 0.0 })
                    .note(if selected { "protocol default" } else { "" }),
            );
        }
    }
    Ok(report)
}
