//! Random watermark-region masks.
//!
//! Masks decide which pixels receive the watermark. The sampler reproduces
//! the usual training mix: axis-aligned boxes, the full frame, irregular
//! brush strokes, and externally supplied mask files, with optional
//! inversion. For embedding several watermarks into one image there are two
//! layouts: rejection-sampled disjoint random rectangles, and a fixed
//! five-square protocol layout (four corners plus center, each square
//! covering 10% of the frame) used by the evaluation harness.
//!
//! All samplers take the RNG explicitly, so a fixed seed reproduces the same
//! mask on every platform.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::raster::{load_mask, resize_bilinear_plane, MaskMap};

/// Mask families the sampler can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Union of 1 to 3 random rectangles.
    Box,
    /// The whole frame.
    Full,
    /// Random brush strokes.
    Irregular,
    /// A user-supplied mask file.
    External,
}

/// Configuration of the random mask sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGenConfig {
    /// Seed for [`MaskGenConfig::rng`].
    pub seed: u64,
    /// Selection weights for box, full, irregular, external, in that order.
    pub kind_weights: [f64; 4],
    /// Probability of inverting the sampled mask.
    pub invert_prob: f64,
    /// Distribution of the number of disjoint masks for multi-watermark
    /// embedding; entry i is the probability of i+1 masks.
    pub multi_counts: Vec<f64>,
    /// Mask files for the external kind.
    pub external: Vec<PathBuf>,
}

impl Default for MaskGenConfig {
    fn default() -> Self {
        MaskGenConfig {
            seed: 0,
            kind_weights: [0.25; 4],
            invert_prob: 0.5,
            multi_counts: vec![0.6, 0.2, 0.2],
            external: Vec::new(),
        }
    }
}

impl MaskGenConfig {
    pub fn validated(self) -> Result<Self> {
        let check_dist = |name: &str, weights: &[f64]| -> Result<()> {
            if weights.iter().any(|&w| !(w >= 0.0)) {
                return Err(Error::BadParam(format!("{name} must be non-negative")));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::BadParam(format!("{name} must sum to 1, got {sum}")));
            }
            Ok(())
        };
        check_dist("mask kind weights", &self.kind_weights)?;
        if self.multi_counts.is_empty() || self.multi_counts.len() > 5 {
            return Err(Error::BadParam(
                "multi-mask count distribution must cover 1 to at most 5 masks".into(),
            ));
        }
        check_dist("multi-mask count distribution", &self.multi_counts)?;
        if !(0.0..=1.0).contains(&self.invert_prob) {
            return Err(Error::BadParam(format!(
                "invert probability must be in [0,1], got {}",
                self.invert_prob
            )));
        }
        Ok(self)
    }

    /// The platform-stable RNG seeded from this configuration.
    pub fn rng(&self) -> ChaCha12Rng {
        use rand::SeedableRng;
        ChaCha12Rng::seed_from_u64(self.seed)
    }
}

const BOX_MARGIN: usize = 10;
const BOX_MIN: usize = 30;
const BOX_MAX: usize = 100;

#[derive(Debug, Clone, Copy)]
struct Rect {
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
}

impl Rect {
    fn disjoint(&self, other: &Rect) -> bool {
        self.y0 + self.h <= other.y0
            || other.y0 + other.h <= self.y0
            || self.x0 + self.w <= other.x0
            || other.x0 + other.w <= self.x0
    }
}

/// One random box: sides uniform in [30,100] (clamped to fit small images),
/// position uniform inside a 10-pixel margin (shrunk if it cannot fit).
fn sample_rect<R: Rng>(height: usize, width: usize, rng: &mut R) -> Rect {
    let mut side = |dim: usize| {
        let s = rng.random_range(BOX_MIN..=BOX_MAX);
        s.min(dim.saturating_sub(2 * BOX_MARGIN)).max(1).min(dim)
    };
    let w = side(width);
    let h = side(height);
    let mut place = |dim: usize, s: usize| {
        let lo = BOX_MARGIN.min(dim - s);
        let hi = (dim - s).saturating_sub(BOX_MARGIN).max(lo);
        rng.random_range(lo..=hi)
    };
    let x0 = place(width, w);
    let y0 = place(height, h);
    Rect { y0, x0, h, w }
}

fn render_rects(height: usize, width: usize, rects: &[Rect]) -> MaskMap {
    let mut mask = MaskMap::zeros(width, height);
    for r in rects {
        mask.fill_rect(r.y0, r.x0, r.h, r.w);
    }
    mask
}

/// Union of 1 to 3 random rectangles.
pub fn sample_box_masks<R: Rng>(height: usize, width: usize, rng: &mut R) -> MaskMap {
    let count = rng.random_range(1..=3);
    let rects: Vec<Rect> = (0..count).map(|_| sample_rect(height, width, rng)).collect();
    render_rects(height, width, &rects)
}

/// Marks every pixel within `radius` of the segment p0-p1, clipped to the
/// mask. A zero-length segment stamps a disc.
fn stamp_capsule(mask: &mut MaskMap, p0: (f64, f64), p1: (f64, f64), radius: f64) {
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let (y_min, y_max) = (p0.0.min(p1.0) - radius, p0.0.max(p1.0) + radius);
    let (x_min, x_max) = (p0.1.min(p1.1) - radius, p0.1.max(p1.1) + radius);
    let y_lo = (y_min.floor() as isize).clamp(0, h);
    let y_hi = ((y_max.ceil() as isize) + 1).clamp(0, h);
    let x_lo = (x_min.floor() as isize).clamp(0, w);
    let x_hi = ((x_max.ceil() as isize) + 1).clamp(0, w);
    let dy = p1.0 - p0.0;
    let dx = p1.1 - p0.1;
    let len2 = dy * dy + dx * dx;
    let r2 = radius * radius;
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let py = y as f64 - p0.0;
            let px = x as f64 - p0.1;
            // Distance from the pixel to the closest point of the segment.
            let t = if len2 > 0.0 {
                ((py * dy + px * dx) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let ry = py - t * dy;
            let rx = px - t * dx;
            if ry * ry + rx * rx <= r2 {
                mask.set(y as usize, x as usize, 1.0);
            }
        }
    }
}

/// 1 to 5 random brush strokes.
///
/// Each stroke is a polyline: uniform start point and heading, 1 to 8
/// segments with length uniform in [20,50] pixels and a per-vertex turn
/// uniform in [-4, +4] degrees, drawn with a round brush of width uniform in
/// [20,50] pixels (the union of discs centered along the path).
pub fn sample_irregular_mask<R: Rng>(height: usize, width: usize, rng: &mut R) -> MaskMap {
    let mut mask = MaskMap::zeros(width, height);
    let strokes = rng.random_range(1..=5);
    for _ in 0..strokes {
        let brush_width = rng.random_range(20..=50) as f64;
        let radius = brush_width / 2.0;
        let mut pos = (
            rng.random_range(0.0..height as f64),
            rng.random_range(0.0..width as f64),
        );
        let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
        let segments = rng.random_range(1..=8);
        for s in 0..segments {
            if s > 0 {
                let turn_deg = rng.random_range(-4.0..=4.0);
                angle += turn_deg * std::f64::consts::PI / 180.0;
            }
            let len = rng.random_range(20.0..=50.0);
            let next = (pos.0 + len * angle.sin(), pos.1 + len * angle.cos());
            stamp_capsule(&mut mask, pos, next, radius);
            pos = next;
        }
    }
    mask
}

fn pick_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Samples one mask: picks a kind by the configured weights, then inverts
/// with the configured probability.
pub fn sample_mask<R: Rng>(
    height: usize,
    width: usize,
    cfg: &MaskGenConfig,
    rng: &mut R,
) -> Result<MaskMap> {
    let kind = match pick_index(&cfg.kind_weights, rng) {
        0 => MaskKind::Box,
        1 => MaskKind::Full,
        2 => MaskKind::Irregular,
        _ => MaskKind::External,
    };
    let mask = sample_mask_of_kind(height, width, kind, cfg, rng)?;
    let invert = rng.random::<f64>() < cfg.invert_prob;
    Ok(if invert { mask.invert() } else { mask })
}

/// Samples one mask of a forced kind, without inversion.
pub fn sample_mask_of_kind<R: Rng>(
    height: usize,
    width: usize,
    kind: MaskKind,
    cfg: &MaskGenConfig,
    rng: &mut R,
) -> Result<MaskMap> {
    Ok(match kind {
        MaskKind::Box => sample_box_masks(height, width, rng),
        MaskKind::Full => MaskMap::ones(width, height),
        MaskKind::Irregular => sample_irregular_mask(height, width, rng),
        MaskKind::External => {
            if cfg.external.is_empty() {
                return Err(Error::NoExternalMasks);
            }
            let pick = rng.random_range(0..cfg.external.len());
            let loaded = load_mask(&cfg.external[pick])?;
            if loaded.width() == width && loaded.height() == height {
                loaded.binarize()
            } else {
                let data = resize_bilinear_plane(
                    loaded.data(),
                    loaded.width(),
                    loaded.height(),
                    width,
                    height,
                );
                MaskMap::from_data(width, height, data).binarize()
            }
        }
    })
}

/// Draws the number of masks for a multi-watermark embedding.
pub fn sample_multi_count<R: Rng>(cfg: &MaskGenConfig, rng: &mut R) -> usize {
    pick_index(&cfg.multi_counts, rng) + 1
}

/// Maximum rectangle draws across one disjoint-set placement.
const PLACEMENT_ATTEMPTS: usize = 1000;

/// Samples `count` pairwise-disjoint random rectangles, one mask each.
///
/// Rectangles are drawn like single box masks and rejected until each new
/// one avoids all accepted ones.
pub fn sample_disjoint_masks<R: Rng>(
    height: usize,
    width: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<MaskMap>> {
    if !(1..=5).contains(&count) {
        return Err(Error::BadParam(format!(
            "disjoint mask count must be in [1,5], got {count}"
        )));
    }
    let mut placed: Vec<Rect> = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count {
        if attempts >= PLACEMENT_ATTEMPTS {
            return Err(Error::MaskPlacement {
                count,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
        attempts += 1;
        let rect = sample_rect(height, width, rng);
        if placed.iter().all(|p| p.disjoint(&rect)) {
            placed.push(rect);
        }
    }
    Ok(placed
        .iter()
        .map(|r| render_rects(height, width, &[*r]))
        .collect())
}

/// Fixed disjoint layout for the multi-watermark protocol: up to five
/// squares, four corner ones and a center one, each with side
/// floor(min(h,w) * sqrt(0.1)) so a square covers 10% of a square frame.
/// Squares are separated by a few pixels so no two touch even diagonally.
pub fn protocol_squares(height: usize, width: usize, count: usize) -> Result<Vec<MaskMap>> {
    if !(1..=5).contains(&count) {
        return Err(Error::BadParam(format!(
            "protocol square count must be in [1,5], got {count}"
        )));
    }
    let side = (f64::sqrt(0.1) * height.min(width) as f64).floor() as usize;
    let positions = |dim: usize| -> Result<(usize, usize, usize)> {
        let free = dim.checked_sub(3 * side).ok_or_else(|| Error::BadParam(format!(
            "image side {dim} too small for three protocol squares of {side}"
        )))?;
        let gap = (free / 4).min(4);
        let margin = (free - 2 * gap) / 2;
        Ok((margin, (dim - side) / 2, margin + 2 * (side + gap)))
    };
    let (y_lo, y_mid, y_hi) = positions(height)?;
    let (x_lo, x_mid, x_hi) = positions(width)?;
    let anchors = [
        (y_lo, x_lo),
        (y_lo, x_hi),
        (y_hi, x_lo),
        (y_hi, x_hi),
        (y_mid, x_mid),
    ];
    Ok(anchors[..count]
        .iter()
        .map(|&(y0, x0)| {
            let mut m = MaskMap::zeros(width, height);
            m.fill_rect(y0, x0, side, side);
            m
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// RNG whose every output is zero, forcing range draws to their minimum.
    struct ZeroRng;
    impl rand::RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0);
        }
    }

    #[test]
    fn minimum_draw_places_one_30_by_30_box_at_the_margin() {
        let mask = sample_box_masks(256, 256, &mut ZeroRng);
        assert_eq!(mask.count_ones(), 900);
        for y in 10..40 {
            for x in 10..40 {
                assert_eq!(mask.get(y, x), 1.0);
            }
        }
        assert_eq!(mask.get(9, 10), 0.0);
        assert_eq!(mask.get(10, 40), 0.0);
    }

    #[test]
    fn box_union_never_exceeds_the_area_sum() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let mask = sample_box_masks(256, 256, &mut rng);
            assert!(mask.count_ones() <= 3 * 100 * 100);
            assert!(mask.count_ones() >= 30 * 30);
            assert!(mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn box_sides_are_uniform_over_30_to_100() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let mut histogram = [0usize; BOX_MAX - BOX_MIN + 1];
        let mut total = 0usize;
        for _ in 0..5000 {
            let r = sample_rect(256, 256, &mut rng);
            histogram[r.w - BOX_MIN] += 1;
            histogram[r.h - BOX_MIN] += 1;
            total += 2;
        }
        let expected = total as f64 / histogram.len() as f64;
        let chi2: f64 = histogram
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // 70 degrees of freedom; the 1% critical value is 100.4.
        assert!(chi2 < 100.4, "chi-square {chi2} too large for uniformity");
    }

    #[test]
    fn small_images_clamp_boxes_to_fit() {
        let mask = sample_box_masks(40, 33, &mut ZeroRng);
        assert!(mask.count_ones() > 0);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = sample_box_masks(25, 12, &mut rng);
            assert!(m.count_ones() > 0);
        }
    }

    #[test]
    fn disc_stamp_popcount_matches_its_area() {
        let mut mask = MaskMap::zeros(64, 64);
        stamp_capsule(&mut mask, (32.0, 32.0), (32.0, 32.0), 10.0);
        let count = mask.count_ones();
        assert!((290..=340).contains(&count), "disc popcount {count}");
    }

    #[test]
    fn capsule_is_the_union_of_discs_along_the_segment() {
        let mut capsule = MaskMap::zeros(96, 64);
        stamp_capsule(&mut capsule, (20.0, 15.0), (40.0, 70.0), 8.0);
        let mut discs = MaskMap::zeros(96, 64);
        for t in 0..=2000 {
            let t = t as f64 / 2000.0;
            let c = (20.0 + t * 20.0, 15.0 + t * 55.0);
            stamp_capsule(&mut discs, c, c, 8.0);
        }
        assert_eq!(capsule.data(), discs.data());
    }

    #[test]
    fn strokes_stay_in_bounds_and_cover_a_sane_fraction() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let mut coverage = 0.0;
        let rounds = 200;
        for _ in 0..rounds {
            let mask = sample_irregular_mask(256, 256, &mut rng);
            assert!(mask.data().iter().all(|&v| v == 0.0 || v == 1.0));
            coverage += mask.count_ones() as f64 / (256.0 * 256.0);
        }
        let mean = coverage / rounds as f64;
        assert!((0.02..=0.40).contains(&mean), "mean coverage {mean}");
    }

    #[test]
    fn full_kind_and_inversion() {
        let cfg = MaskGenConfig {
            kind_weights: [0.0, 1.0, 0.0, 0.0],
            invert_prob: 1.0,
            ..Default::default()
        }
        .validated()
        .unwrap();
        let mut rng = cfg.rng();
        let mask = sample_mask(64, 48, &cfg, &mut rng).unwrap();
        assert_eq!(mask.count_ones(), 0);
        let cfg = MaskGenConfig {
            kind_weights: [0.0, 1.0, 0.0, 0.0],
            invert_prob: 0.0,
            ..cfg
        };
        let mask = sample_mask(64, 48, &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(mask.count_ones(), 64 * 48);
    }

    #[test]
    fn fixed_seed_reproduces_the_same_mask() {
        let cfg = MaskGenConfig {
            seed: 77,
            ..Default::default()
        };
        let cfg = MaskGenConfig {
            kind_weights: [0.5, 0.0, 0.5, 0.0],
            ..cfg
        };
        let a = sample_mask(128, 128, &cfg, &mut cfg.rng()).unwrap();
        let b = sample_mask(128, 128, &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn external_kind_without_files_errors() {
        let cfg = MaskGenConfig {
            kind_weights: [0.0, 0.0, 0.0, 1.0],
            invert_prob: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            sample_mask(64, 64, &cfg, &mut cfg.rng()),
            Err(Error::NoExternalMasks)
        ));
    }

    #[test]
    fn external_kind_loads_and_resizes_mask_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mut small = MaskMap::zeros(8, 8);
        small.fill_rect(0, 0, 4, 8);
        crate::raster::save_mask(&small, &path).unwrap();
        let cfg = MaskGenConfig {
            kind_weights: [0.0, 0.0, 0.0, 1.0],
            invert_prob: 0.0,
            external: vec![path],
            ..Default::default()
        };
        let mask = sample_mask(16, 16, &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(mask.width(), 16);
        assert_eq!(mask.height(), 16);
        // The top half of the source stays on after upscaling.
        assert_eq!(mask.get(2, 7), 1.0);
        assert_eq!(mask.get(13, 7), 0.0);
    }

    #[test]
    fn config_validation_catches_bad_distributions() {
        let bad = MaskGenConfig {
            kind_weights: [0.5, 0.5, 0.5, 0.0],
            ..Default::default()
        };
        assert!(bad.validated().is_err());
        let bad = MaskGenConfig {
            invert_prob: 1.5,
            ..Default::default()
        };
        assert!(bad.validated().is_err());
        let bad = MaskGenConfig {
            multi_counts: vec![0.2; 6],
            ..Default::default()
        };
        assert!(bad.validated().is_err());
        assert!(MaskGenConfig::default().validated().is_ok());
    }

    #[test]
    fn multi_count_follows_the_distribution() {
        let cfg = MaskGenConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[sample_multi_count(&cfg, &mut rng) - 1] += 1;
        }
        assert!((counts[0] as f64 / 3000.0 - 0.6).abs() < 0.05);
        assert!((counts[1] as f64 / 3000.0 - 0.2).abs() < 0.05);
        assert!((counts[2] as f64 / 3000.0 - 0.2).abs() < 0.05);
    }

    #[test]
    fn disjoint_masks_do_not_overlap_and_sum_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for count in 1..=5 {
            let masks = sample_disjoint_masks(256, 256, count, &mut rng).unwrap();
            assert_eq!(masks.len(), count);
            let mut union = MaskMap::zeros(256, 256);
            let mut total = 0;
            for m in &masks {
                for other in &masks {
                    if !std::ptr::eq(m, other) {
                        assert!(m.disjoint_with(other));
                    }
                }
                total += m.count_ones();
                for (u, &v) in union.data_mut().iter_mut().zip(m.data()) {
                    *u += v;
                }
            }
            assert_eq!(union.data().iter().filter(|&&v| v > 0.0).count(), total);
        }
        assert!(matches!(
            sample_disjoint_masks(256, 256, 6, &mut rng),
            Err(Error::BadParam(_))
        ));
    }

    #[test]
    fn impossible_placement_reports_the_attempt_budget() {
        // Five 30x30 boxes cannot fit disjointly in a 50x50 frame: after
        // clamping, every box covers the same margin-bounded region.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        match sample_disjoint_masks(50, 50, 5, &mut rng) {
            Err(Error::MaskPlacement { count: 5, attempts: 1000 }) => {}
            other => panic!("expected MaskPlacement, got {other:?}"),
        }
    }

    #[test]
    fn protocol_squares_cover_ten_percent_each_and_are_disjoint() {
        let masks = protocol_squares(256, 256, 5).unwrap();
        assert_eq!(masks.len(), 5);
        let side = (256.0 * f64::sqrt(0.1)).floor() as usize;
        assert_eq!(side, 80);
        for m in &masks {
            assert_eq!(m.count_ones(), side * side);
        }
        for (i, a) in masks.iter().enumerate() {
            for b in &masks[i + 1..] {
                assert!(a.disjoint_with(b));
            }
        }
        // Corner squares sit 4 pixels in; the center square is centered.
        assert_eq!(masks[0].get(4, 4), 1.0);
        assert_eq!(masks[0].get(3, 4), 0.0);
        assert_eq!(masks[3].get(251, 251), 1.0);
        assert_eq!(masks[4].get(128, 128), 1.0);
        // No two squares touch, even diagonally: a one-pixel dilation of any
        // square stays disjoint from the others.
        for (i, a) in masks.iter().enumerate() {
            let mut grown = MaskMap::zeros(256, 256);
            for y in 0..256usize {
                for x in 0..256usize {
                    let on = (y.saturating_sub(1)..=(y + 1).min(255)).any(|yy| {
                        (x.saturating_sub(1)..=(x + 1).min(255)).any(|xx| a.get(yy, xx) == 1.0)
                    });
                    if on {
                        grown.set(y, x, 1.0);
                    }
                }
            }
            for (j, b) in masks.iter().enumerate() {
                if i != j {
                    assert!(grown.disjoint_with(b), "squares {i} and {j} touch");
                }
            }
        }
    }
}
