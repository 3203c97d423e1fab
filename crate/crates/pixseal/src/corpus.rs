//! Synthetic evaluation images and corpus loading.
//!
//! Generated images are sums of low-frequency cosine fields (wavelengths of
//! 64 px and up, so a 16 px averaging window removes most of them), plus
//! soft-edged structures (discs and half-planes blended through a sigmoid)
//! and a controllable amount of fine per-pixel texture. Samples are
//! normalized into a mid-tone intensity window, which keeps the perceptual
//! headroom maps in a regime where full-frame embedding stays between
//! roughly 36 and 41 dB PSNR and leaves room for 1.5x brightness scaling
//! without heavy clipping.
//!
//! Two presets: `Synthetic` is smooth and nearly texture-free, as a
//! best-case host; `PhotographicStyle` layers in structures and fine grain
//! comparable to camera output, as a realistic host.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::codec::logistic;
use crate::error::{Error, Result};
use crate::raster::{load_image, ImageBuffer};

/// Tuning knobs of the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    /// Number of cosine components in the base field.
    pub octaves: usize,
    /// Shortest base wavelength in pixels.
    pub min_wavelength: f64,
    /// Inclusive range of soft structure counts.
    pub min_structures: usize,
    pub max_structures: usize,
    /// Standard deviation of the fine per-pixel texture, on the sample
    /// scale, added after intensity normalization.
    pub texture_amp: f64,
    /// Output intensity window (before texture).
    pub intensity_low: f64,
    pub intensity_high: f64,
}

/// Corpus flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusPreset {
    Synthetic,
    PhotographicStyle,
}

impl CorpusPreset {
    pub fn params(self) -> SynthParams {
        match self {
            CorpusPreset::Synthetic => SynthParams {
                octaves: 8,
                min_wavelength: 160.0,
                min_structures: 0,
                max_structures: 2,
                texture_amp: 0.0015,
                intensity_low: 0.10,
                intensity_high: 0.66,
            },
            CorpusPreset::PhotographicStyle => SynthParams {
                octaves: 8,
                min_wavelength: 160.0,
                min_structures: 2,
                max_structures: 5,
                texture_amp: 0.004,
                intensity_low: 0.16,
                intensity_high: 0.66,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorpusPreset::Synthetic => "synthetic",
            CorpusPreset::PhotographicStyle => "photographic-style",
        }
    }
}

impl std::str::FromStr for CorpusPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(CorpusPreset::Synthetic),
            "photographic-style" | "photographic" => Ok(CorpusPreset::PhotographicStyle),
            other => Err(Error::BadParam(format!("unknown corpus preset {other:?}"))),
        }
    }
}

/// Draws one image with a preset's default parameters.
pub fn synth_image<R: Rng>(rng: &mut R, width: usize, height: usize, preset: CorpusPreset) -> ImageBuffer {
    synth_image_with(rng, width, height, &preset.params())
}

/// Draws one image with explicit generator parameters.
pub fn synth_image_with<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    params: &SynthParams,
) -> ImageBuffer {
    let (w, h) = (width, height);
    let diag = ((w * w + h * h) as f64).sqrt();

    // Shared luminance field: low-frequency cosines with 1/j amplitude
    // falloff plus one gentle linear ramp.
    let mut components: Vec<(f64, f64, f64, f64)> = Vec::new();
    for j in 0..params.octaves {
        let wavelength = params.min_wavelength * 2f64.powf(rng.random_range(0.0..2.0));
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.4..1.0) / (1.0 + j as f64 * 0.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let k = std::f64::consts::TAU / wavelength;
        components.push((k * theta.cos(), k * theta.sin(), phase, amp));
    }
    let ramp_theta = rng.random_range(0.0..std::f64::consts::TAU);
    let ramp_amp = rng.random_range(0.0..1.2);
    let (ramp_x, ramp_y) = (ramp_theta.cos() / diag, ramp_theta.sin() / diag);

    let mut base = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = ramp_amp * (xf * ramp_x + yf * ramp_y);
            for &(kx, ky, phase, amp) in &components {
                v += amp * (kx * xf + ky * yf + phase).cos();
            }
            base[y * w + x] = v;
        }
    }

    // Soft structures: discs and half-planes with sigmoid edges.
    let n_structures = rng.random_range(params.min_structures..=params.max_structures);
    for _ in 0..n_structures {
        let shade = rng.random_range(-0.5..0.5);
        let softness = rng.random_range(4.0..12.0);
        if rng.random::<bool>() {
            let cy = rng.random_range(0.0..h as f64);
            let cx = rng.random_range(0.0..w as f64);
            let radius = rng.random_range(0.08..0.3) * w.min(h) as f64;
            for y in 0..h {
                for x in 0..w {
                    let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                    base[y * w + x] += shade * logistic((radius - d) / softness);
                }
            }
        } else {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let offset = rng.random_range(0.2..0.8);
            let (nx, ny) = (theta.cos(), theta.sin());
            for y in 0..h {
                for x in 0..w {
                    let t = (x as f64 * nx + y as f64 * ny) / diag + 0.5 - offset;
                    base[y * w + x] += shade * logistic(t * diag / softness / 8.0);
                }
            }
        }
    }

    // Per-channel tints: one extra low-frequency cosine per channel keeps
    // the image colorful without decorrelating the channels entirely.
    let mut planes = vec![vec![0.0f64; w * h]; 3];
    for plane in planes.iter_mut() {
        let wavelength = params.min_wavelength * 2f64.powf(rng.random_range(0.5..2.0));
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.05..0.35);
        let k = std::f64::consts::TAU / wavelength;
        let (kx, ky) = (k * theta.cos(), k * theta.sin());
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] =
                    base[y * w + x] + amp * (kx * x as f64 + ky * y as f64 + phase).cos();
            }
        }
    }

    // Joint normalization into the intensity window preserves the color
    // relationships between channels.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for plane in &planes {
        for &v in plane {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = (hi - lo).max(1e-12);
    let margin = 3.0 * params.texture_amp;
    let out_lo = params.intensity_low + margin;
    let out_hi = params.intensity_high - margin;
    let gain = (out_hi - out_lo) / span;

    // Fine texture: uniform noise with the requested standard deviation.
    let noise_half_width = params.texture_amp * 3.0f64.sqrt();
    let mut data = Vec::with_capacity(3 * w * h);
    for plane in &planes {
        for &v in plane {
            let noise = rng.random_range(-noise_half_width..=noise_half_width);
            data.push((out_lo + gain * (v - lo) + noise).clamp(0.0, 1.0));
        }
    }
    ImageBuffer::from_data(w, h, data)
}

/// Generates a deterministic corpus of `count` images from one seed.
pub fn generate(
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
    preset: CorpusPreset,
) -> Vec<ImageBuffer> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| synth_image(&mut rng, width, height, preset))
        .collect()
}

/// Loads every PNG/JPEG in a directory, sorted by file name.
pub fn load_dir<P: AsRef<Path>>(dir: P) -> Result<Vec<(PathBuf, ImageBuffer)>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("png") | Some("jpg") | Some("jpeg")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus {
            path: dir.to_path_buf(),
        });
    }
    paths
        .into_iter()
        .map(|p| load_image(&p).map(|img| (p, img)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jnd::{jnd_map, JndParams};
    use crate::raster::save_image;

    #[test]
    fn images_are_deterministic_per_seed_and_sized() {
        let a = generate(11, 2, 96, 64, CorpusPreset::PhotographicStyle);
        let b = generate(11, 2, 96, 64, CorpusPreset::PhotographicStyle);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_eq!((a[0].width(), a[0].height()), (96, 64));
        let c = generate(12, 1, 96, 64, CorpusPreset::PhotographicStyle);
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn samples_stay_inside_the_intensity_window() {
        for preset in [CorpusPreset::Synthetic, CorpusPreset::PhotographicStyle] {
            let imgs = generate(5, 3, 128, 128, preset);
            for img in &imgs {
                let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo >= 0.08, "{} low {lo}", preset.name());
                assert!(hi <= 0.68, "{} high {hi}", preset.name());
                assert!(hi - lo > 0.3, "{} dynamic range {}", preset.name(), hi - lo);
            }
        }
    }

    #[test]
    fn photographic_preset_is_grainier_than_synthetic() {
        let grain = |preset| {
            let imgs = generate(21, 4, 128, 128, preset);
            let mut total = 0.0;
            for img in &imgs {
                let lum = img.luma();
                // High-pass energy: difference from the 4-neighbor mean.
                let mut acc = 0.0;
                for y in 1..127 {
                    for x in 1..127 {
                        let c = lum[y * 128 + x];
                        let n = 0.25
                            * (lum[(y - 1) * 128 + x]
                                + lum[(y + 1) * 128 + x]
                                + lum[y * 128 + x - 1]
                                + lum[y * 128 + x + 1]);
                        acc += (c - n) * (c - n);
                    }
                }
                total += (acc / (126.0 * 126.0)).sqrt();
            }
            total / 4.0
        };
        let synth = grain(CorpusPreset::Synthetic);
        let photo = grain(CorpusPreset::PhotographicStyle);
        assert!(
            photo > 2.0 * synth,
            "photographic grain {photo} vs synthetic {synth}"
        );
    }

    #[test]
    fn box_residual_of_the_host_stays_small() {
        // The extractor subtracts a 16x16 moving average; the corpus must
        // not leave too much host energy behind it, or embedded carriers
        // would drown. Rough residual proxy: luma minus the 16x16 block
        // mean, root mean squared.
        let imgs = generate(31, 3, 128, 128, CorpusPreset::PhotographicStyle);
        for img in &imgs {
            let lum = img.luma();
            let mut acc = 0.0;
            for by in (0..128).step_by(16) {
                for bx in (0..128).step_by(16) {
                    let mut mean = 0.0;
                    for y in 0..16 {
                        for x in 0..16 {
                            mean += lum[(by + y) * 128 + bx + x];
                        }
                    }
                    mean /= 256.0;
                    for y in 0..16 {
                        for x in 0..16 {
                            let d = lum[(by + y) * 128 + bx + x] - mean;
                            acc += d * d;
                        }
                    }
                }
            }
            let rms = (acc / (128.0 * 128.0)).sqrt();
            assert!(rms < 0.06, "host residual rms {rms}");
            assert!(rms > 0.002, "host residual rms {rms} suspiciously clean");
        }
    }

    #[test]
    fn perceptual_headroom_sits_in_the_psnr_band() {
        // Full-frame embedding at the default strength yields a PSNR of
        // about 54.29 - 20 log10(rms H). The target band of 36..41 dB
        // therefore needs the corpus root mean square headroom in roughly
        // 4.6..8.2.
        let imgs = generate(41, 5, 256, 256, CorpusPreset::PhotographicStyle);
        let mut total = 0.0;
        for img in &imgs {
            let jnd = jnd_map(img, &JndParams::default());
            let h = jnd.plane(0);
            let rms = (h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
            total += rms;
        }
        let mean_rms = total / 5.0;
        assert!(
            (4.6..=8.2).contains(&mean_rms),
            "corpus rms headroom {mean_rms} outside the PSNR band"
        );
    }

    #[test]
    fn directory_loading_filters_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = generate(3, 2, 32, 24, CorpusPreset::Synthetic);
        save_image(&imgs[1], dir.path().join("b.png")).unwrap();
        save_image(&imgs[0], dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignore me").unwrap();
        let loaded = load_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert!(loaded[0].0.ends_with("a.png"));
        assert!(loaded[1].0.ends_with("b.png"));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dir(empty.path()),
            Err(Error::EmptyCorpus { .. })
        ));
    }
}
