//! Just-noticeable-difference heatmap.
//!
//! The JND map bounds, per pixel, how much an 8-bit pixel value can change
//! before a human observer notices. It combines two effects computed from the
//! image luminance on the [0,255] scale: luminance adaptation (reduced
//! sensitivity in very dark and very bright regions) and contrast masking
//! (reduced sensitivity near strong edges). The embedder scales the watermark
//! signal by this map so distortion concentrates where it is least visible.
//!
//! All rasters here use [0,255] units; the rest of the crate stays in the
//! canonical [0,1] range and divides by 255 at the single point of use.

use crate::error::{Error, Result};
use crate::raster::ImageBuffer;

/// Parameters of the JND model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JndParams {
    /// Trade-off between luminance adaptation and contrast masking in [0,1].
    pub gamma: f64,
    /// Small positive constant inside the square root of the dark-region
    /// adaptation curve.
    pub epsilon: f64,
    /// Per-channel scaling of the heatmap; the blue channel tolerates roughly
    /// twice the distortion of red and green.
    pub alpha_rgb: [f64; 3],
}

impl Default for JndParams {
    fn default() -> Self {
        JndParams {
            gamma: 0.3,
            epsilon: 1e-6,
            alpha_rgb: [1.0, 1.0, 2.0],
        }
    }
}

impl JndParams {
    /// Validates gamma in [0,1], epsilon > 0, alphas > 0.
    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::BadParam(format!(
                "jnd gamma must be in [0,1], got {}",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::BadParam(format!(
                "jnd epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.alpha_rgb.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::BadParam(
                "jnd channel scales must all be > 0".into(),
            ));
        }
        Ok(self)
    }
}

/// Per-pixel perceptibility bound in 8-bit units, one plane per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct JndMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl JndMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[c * self.width * self.height + y * self.width + x]
    }
}

const K_LUM: [[f64; 5]; 5] = [
    [1.0, 1.0, 1.0, 1.0, 1.0],
    [1.0, 2.0, 2.0, 2.0, 1.0],
    [1.0, 2.0, 0.0, 2.0, 1.0],
    [1.0, 2.0, 2.0, 2.0, 1.0],
    [1.0, 1.0, 1.0, 1.0, 1.0],
];

const K_X: [[f64; 3]; 3] = [
    [-1.0, 0.0, 1.0],
    [-2.0, 0.0, 2.0],
    [-1.0, 0.0, 1.0],
];

const K_Y: [[f64; 3]; 3] = [
    [-1.0, -2.0, -1.0],
    [0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0],
];

#[inline]
fn at(data: &[f64], width: usize, height: usize, y: isize, x: isize) -> f64 {
    let yy = y.clamp(0, height as isize - 1) as usize;
    let xx = x.clamp(0, width as isize - 1) as usize;
    data[yy * width + xx]
}

/// Rec.601 luma of the image on the [0,255] scale.
pub fn luminance(img: &ImageBuffer) -> Vec<f64> {
    img.luma().into_iter().map(|v| v * 255.0).collect()
}

/// Local background luminance: 5x5 weighted mean with the luminance kernel
/// (center weight 0, weights summing to 32), borders edge-replicated.
pub fn background_luminance(lum: &[f64], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(lum.len(), width * height);
    let mut out = Vec::with_capacity(lum.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0;
            for (dy, row) in K_LUM.iter().enumerate() {
                for (dx, &w) in row.iter().enumerate() {
                    if w != 0.0 {
                        acc += w * at(lum, width, height, y + dy as isize - 2, x + dx as isize - 2);
                    }
                }
            }
            out.push(acc / 32.0);
        }
    }
    out
}

/// Pointwise luminance-adaptation curve.
///
/// Below the knee at 127 the eye tolerates more error in darker regions; above
/// it the tolerance grows linearly with brightness.
pub fn la_curve(b: f64, params: &JndParams) -> f64 {
    if b <= 127.0 {
        17.0 * (1.0 - (b / 127.0 + params.epsilon).sqrt()) + 3.0
    } else {
        3.0 / 128.0 * (b - 127.0) + 3.0
    }
}

/// Applies [`la_curve`] elementwise to a background-luminance raster.
pub fn luminance_adaptation(b: &[f64], params: &JndParams) -> Vec<f64> {
    b.iter().map(|&v| la_curve(v, params)).collect()
}

/// Pointwise contrast-masking curve over the gradient magnitude.
pub fn cm_curve(c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    16.0 * c.powf(2.4) / (c * c + 676.0)
}

/// Contrast masking from the luminance raster: Sobel gradient magnitude
/// (edge-replicated) through [`cm_curve`].
pub fn contrast_masking(lum: &[f64], width: usize, height: usize) -> Vec<f64> {
    assert_eq!(lum.len(), width * height);
    let mut out = Vec::with_capacity(lum.len());
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    let v = at(lum, width, height, y + dy as isize - 1, x + dx as isize - 1);
                    gx += K_X[dy][dx] * v;
                    gy += K_Y[dy][dx] * v;
                }
            }
            out.push(cm_curve((gx * gx + gy * gy).sqrt()));
        }
    }
    out
}

/// Combines adaptation and masking into the heatmap value.
pub fn h_value(la: f64, cm: f64, gamma: f64) -> f64 {
    la + cm - gamma * la.min(cm)
}

/// Full JND heatmap of an image: H = LA + CM - gamma*min(LA, CM) computed
/// from the luminance, scaled per channel by `alpha_rgb`.
pub fn jnd_map(img: &ImageBuffer, params: &JndParams) -> JndMap {
    let (w, h) = (img.width(), img.height());
    let lum = luminance(img);
    let b = background_luminance(&lum, w, h);
    let la = luminance_adaptation(&b, params);
    let cm = contrast_masking(&lum, w, h);
    let n = w * h;
    let mut data = Vec::with_capacity(3 * n);
    for &alpha in &params.alpha_rgb {
        for i in 0..n {
            data.push(alpha * h_value(la[i], cm[i], params.gamma));
        }
    }
    JndMap {
        width: w,
        height: h,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(v: f64) -> ImageBuffer {
        ImageBuffer::constant(16, 16, [v, v, v])
    }

    #[test]
    fn luminance_extremes_and_red() {
        let lum = luminance(&constant_image(1.0));
        assert!(lum.iter().all(|&v| (v - 255.0).abs() < 1e-12));
        let lum = luminance(&constant_image(0.0));
        assert!(lum.iter().all(|&v| v == 0.0));
        let red = ImageBuffer::constant(4, 4, [1.0, 0.0, 0.0]);
        let lum = luminance(&red);
        assert!(lum.iter().all(|&v| (v - 76.245).abs() < 1e-9));
    }

    #[test]
    fn background_luminance_of_constant_is_constant() {
        let lum = vec![93.0; 7 * 7];
        let b = background_luminance(&lum, 7, 7);
        assert!(b.iter().all(|&v| (v - 93.0).abs() < 1e-12));
    }

    #[test]
    fn background_luminance_kernel_weights() {
        // Center weight is 0: an impulse at the center does not contribute.
        let mut lum = vec![0.0; 25];
        lum[2 * 5 + 2] = 32.0;
        let b = background_luminance(&lum, 5, 5);
        assert_eq!(b[2 * 5 + 2], 0.0);
        // An impulse at an 8-neighborhood position has weight 2.
        let mut lum = vec![0.0; 25];
        lum[1 * 5 + 2] = 32.0;
        let b = background_luminance(&lum, 5, 5);
        assert!((b[2 * 5 + 2] - 2.0).abs() < 1e-12);
        // A corner of the 5x5 kernel support has weight 1.
        let mut lum = vec![0.0; 25];
        lum[0] = 32.0;
        let b = background_luminance(&lum, 5, 5);
        assert!((b[2 * 5 + 2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adaptation_curve_closed_forms() {
        let p = JndParams::default();
        // Knee continuity: both branches give ~3 at B = 127.
        assert!((la_curve(127.0, &p) - 3.0).abs() <= 10.0 * p.epsilon);
        assert!((la_curve(255.0, &p) - 6.0).abs() < 1e-12);
        let expected_dark = 17.0 * (1.0 - p.epsilon.sqrt()) + 3.0;
        assert!((la_curve(0.0, &p) - expected_dark).abs() < 1e-12);
        assert!((la_curve(0.0, &p) - 19.983).abs() < 1e-3);
        assert!((la_curve(128.0, &p) - (3.0 + 3.0 / 128.0)).abs() < 1e-12);
    }

    #[test]
    fn masking_curve_closed_forms() {
        assert_eq!(cm_curve(0.0), 0.0);
        let expected = 8.0 * 26.0f64.powf(0.4);
        assert!((cm_curve(26.0) - expected).abs() < 1e-9);
        assert!((cm_curve(26.0) - 29.45).abs() < 0.01);
    }

    #[test]
    fn constant_image_has_zero_contrast() {
        let lum = vec![55.0; 8 * 8];
        let cm = contrast_masking(&lum, 8, 8);
        assert!(cm.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_gradient_magnitude() {
        // Columns 0..3 black, 3..6 white: the horizontal kernel sums 1+2+1
        // on the bright side, so C = 4 * 255 at edge-adjacent columns.
        let (w, h) = (6, 6);
        let mut lum = vec![0.0; w * h];
        for y in 0..h {
            for x in 3..w {
                lum[y * w + x] = 255.0;
            }
        }
        let mut gx_abs = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut gx = 0.0;
                for dy in 0..3 {
                    for dx in 0..3 {
                        gx += K_X[dy][dx] * at(&lum, w, h, y + dy as isize - 1, x + dx as isize - 1);
                    }
                }
                gx_abs[y as usize * w + x as usize] = gx.abs();
            }
        }
        for y in 0..h {
            assert!((gx_abs[y * w + 2] - 1020.0).abs() < 1e-9);
            assert!((gx_abs[y * w + 3] - 1020.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_mid_gray_heatmap_closed_form() {
        let p = JndParams::default();
        let img = constant_image(128.0 / 255.0);
        let map = jnd_map(&img, &p);
        // CM = 0, so H = LA(128) through the bright branch.
        let expected = 3.0 / 128.0 * (128.0 - 127.0) + 3.0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                assert!((map.get(0, y, x) - expected).abs() < 1e-6);
                assert!((map.get(1, y, x) - expected).abs() < 1e-6);
                assert!((map.get(2, y, x) - 2.0 * expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn channel_structure_holds_everywhere() {
        let p = JndParams::default();
        let mut img = ImageBuffer::new(12, 9);
        for c in 0..3 {
            for y in 0..9 {
                for x in 0..12 {
                    img.set(c, y, x, ((c + 2 * y + 3 * x) % 7) as f64 / 6.0);
                }
            }
        }
        let map = jnd_map(&img, &p);
        for y in 0..9 {
            for x in 0..12 {
                let (r, g, b) = (map.get(0, y, x), map.get(1, y, x), map.get(2, y, x));
                assert!(r >= 0.0);
                assert_eq!(r, g);
                assert_eq!(b, 2.0 * g);
            }
        }
    }

    #[test]
    fn gamma_zero_adds_the_two_terms() {
        assert_eq!(h_value(5.0, 7.0, 0.0), 12.0);
        // When both effects are equal, H = (2 - gamma) * v.
        let gamma = 0.3;
        assert!((h_value(4.0, 4.0, gamma) - (2.0 - gamma) * 4.0).abs() < 1e-12);
    }

    #[test]
    fn heatmap_lower_bound_property() {
        // H >= max(LA, CM) - gamma*min(LA, CM) >= 0 for gamma in [0,1].
        for gamma in [0.0, 0.3, 1.0] {
            for la in [0.5, 3.0, 20.0] {
                for cm in [0.0, 2.9, 31.0] {
                    let h = h_value(la, cm, gamma);
                    assert!(h >= la.max(cm) - gamma * la.min(cm) - 1e-12);
                    assert!(h >= 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_adaptation_monotonicity() {
        let p = JndParams::default();
        // Non-increasing on [0,127], non-decreasing on [127,255].
        let mut prev = f64::INFINITY;
        for b in 0..=127 {
            let v = la_curve(b as f64, &p);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        let mut prev = 0.0;
        for b in 127..=255 {
            let v = la_curve(b as f64, &p);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }
}
