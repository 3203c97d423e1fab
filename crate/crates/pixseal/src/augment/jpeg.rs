//! Self-contained baseline JPEG round trip (compress then decompress,
//! without the entropy coding stage, which is lossless and irrelevant to
//! pixel fidelity).
//!
//! Pipeline: quantize the input to the 8-bit grid, convert to full-range
//! YCbCr, pad by edge replication to multiples of 16, subsample chroma 2x2
//! by averaging (4:2:0), transform each 8x8 block with the orthonormal DCT,
//! quantize the coefficients with the standard base tables scaled by the
//! quality factor, then invert every step with nearest-neighbor chroma
//! upsampling. Quality 100 scales every table entry down to 1, so the only
//! loss left is chroma subsampling and coefficient rounding.

use crate::raster::{quantize8, ImageBuffer};

/// Standard base quantization table for the luma plane.
const LUMA_BASE: [u32; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Standard base quantization table for the chroma planes.
const CHROMA_BASE: [u32; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Scales a base table by the quality factor with the reference integer
/// formula: scale = 5000/Q below 50, otherwise 200 - 2Q, and each entry
/// becomes clamp((base * scale + 50) / 100, 1, 255).
fn quant_table(base: &[u32; 64], quality: u32) -> [f64; 64] {
    let scale = if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    };
    let mut table = [0.0f64; 64];
    for (t, &b) in table.iter_mut().zip(base.iter()) {
        *t = ((b * scale + 50) / 100).clamp(1, 255) as f64;
    }
    table
}

/// Orthonormal 8-point DCT basis: M[u][x] = C(u) cos((2x+1) u pi / 16) with
/// C(0) = sqrt(1/8) and C(u>0) = 1/2, so M Mt = I.
fn dct_matrix() -> [[f64; 8]; 8] {
    let mut m = [[0.0f64; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let c = if u == 0 { 0.125f64.sqrt() } else { 0.5 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = c * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    m
}

fn mul(a: &[[f64; 8]; 8], b: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut out = [[0.0f64; 8]; 8];
    for i in 0..8 {
        for k in 0..8 {
            let aik = a[i][k];
            for j in 0..8 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn transpose(a: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let mut out = [[0.0f64; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Runs every 8x8 block of a plane through DCT, coefficient quantization,
/// and inverse DCT. Values are on the [0,255] scale; dimensions must be
/// multiples of 8.
fn code_plane(plane: &mut [f64], w: usize, h: usize, q: &[f64; 64], m: &[[f64; 8]; 8]) {
    let mt = transpose(m);
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut block = [[0.0f64; 8]; 8];
            for y in 0..8 {
                for x in 0..8 {
                    block[y][x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            let mut coeffs = mul(&mul(m, &block), &mt);
            for u in 0..8 {
                for v in 0..8 {
                    let step = q[u * 8 + v];
                    coeffs[u][v] = (coeffs[u][v] / step).round() * step;
                }
            }
            let rec = mul(&mul(&mt, &coeffs), m);
            for y in 0..8 {
                for x in 0..8 {
                    plane[(by + y) * w + bx + x] = (rec[y][x] + 128.0).clamp(0.0, 255.0);
                }
            }
        }
    }
}

/// Compresses and decompresses an image at the given quality in [1,100].
pub fn roundtrip(img: &ImageBuffer, quality: u32) -> ImageBuffer {
    assert!((1..=100).contains(&quality), "JPEG quality must be 1..=100");
    let (w, h) = (img.width(), img.height());
    let pw = w.div_ceil(16) * 16;
    let ph = h.div_ceil(16) * 16;

    // Full-range YCbCr on the [0,255] scale, padded by edge replication.
    let mut yy = vec![0.0f64; pw * ph];
    let mut cb = vec![0.0f64; pw * ph];
    let mut cr = vec![0.0f64; pw * ph];
    for py in 0..ph {
        let sy = py.min(h - 1);
        for px in 0..pw {
            let sx = px.min(w - 1);
            let r = quantize8(img.get(0, sy, sx)) as f64;
            let g = quantize8(img.get(1, sy, sx)) as f64;
            let b = quantize8(img.get(2, sy, sx)) as f64;
            let i = py * pw + px;
            yy[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }
    }

    // 4:2:0 chroma: average each 2x2 quad.
    let (cw, ch) = (pw / 2, ph / 2);
    let sub = |full: &[f64]| -> Vec<f64> {
        let mut s = vec![0.0f64; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                s[y * cw + x] = 0.25
                    * (full[2 * y * pw + 2 * x]
                        + full[2 * y * pw + 2 * x + 1]
                        + full[(2 * y + 1) * pw + 2 * x]
                        + full[(2 * y + 1) * pw + 2 * x + 1]);
            }
        }
        s
    };
    let mut cb_s = sub(&cb);
    let mut cr_s = sub(&cr);

    let m = dct_matrix();
    let q_luma = quant_table(&LUMA_BASE, quality);
    let q_chroma = quant_table(&CHROMA_BASE, quality);
    code_plane(&mut yy, pw, ph, &q_luma, &m);
    code_plane(&mut cb_s, cw, ch, &q_chroma, &m);
    code_plane(&mut cr_s, cw, ch, &q_chroma, &m);

    // Nearest-neighbor chroma upsampling, RGB conversion, crop to the
    // original frame, and snap back to the 8-bit grid.
    let mut out = ImageBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let yv = yy[y * pw + x];
            let cbv = cb_s[(y / 2) * cw + x / 2] - 128.0;
            let crv = cr_s[(y / 2) * cw + x / 2] - 128.0;
            let r = yv + 1.402 * crv;
            let g = yv - 0.344136 * cbv - 0.714136 * crv;
            let b = yv + 1.772 * cbv;
            out.set(0, y, x, r.round().clamp(0.0, 255.0) / 255.0);
            out.set(1, y, x, g.round().clamp(0.0, 255.0) / 255.0);
            out.set(2, y, x, b.round().clamp(0.0, 255.0) / 255.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        let mse: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data().len() as f64;
        -10.0 * mse.log10()
    }

    fn textured(w: usize, h: usize, phase: f64) -> ImageBuffer {
        let mut img = ImageBuffer::new(w, h);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let v = 0.5
                        + 0.2 * ((x as f64 * 0.11 + phase + c as f64).sin())
                        + 0.15 * ((y as f64 * 0.07 + 2.0 * phase).cos())
                        + 0.05 * (((x * y) % 17) as f64 / 17.0 - 0.5);
                    img.set(c, y, x, v.clamp(0.0, 1.0));
                }
            }
        }
        img
    }

    #[test]
    fn quality_scaling_matches_the_reference_formula() {
        let q50 = quant_table(&LUMA_BASE, 50);
        for (t, &b) in q50.iter().zip(LUMA_BASE.iter()) {
            assert_eq!(*t, b as f64);
        }
        let q100 = quant_table(&LUMA_BASE, 100);
        assert!(q100.iter().all(|&t| t == 1.0));
        let q25 = quant_table(&CHROMA_BASE, 25);
        for (t, &b) in q25.iter().zip(CHROMA_BASE.iter()) {
            assert_eq!(*t, (2 * b).min(255) as f64);
        }
        // Quality 1 saturates at the clamp.
        let q1 = quant_table(&LUMA_BASE, 1);
        assert_eq!(q1[0], 255.0);
    }

    #[test]
    fn dct_matrix_is_orthonormal() {
        let m = dct_matrix();
        let prod = mul(&m, &transpose(&m));
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unquantized_blocks_reconstruct_exactly() {
        let m = dct_matrix();
        let mt = transpose(&m);
        let mut block = [[0.0f64; 8]; 8];
        for y in 0..8 {
            for x in 0..8 {
                block[y][x] = ((y * 31 + x * 17) % 251) as f64 - 100.0;
            }
        }
        let coeffs = mul(&mul(&m, &block), &mt);
        let rec = mul(&mul(&mt, &coeffs), &m);
        for y in 0..8 {
            for x in 0..8 {
                assert!((rec[y][x] - block[y][x]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_gray_images_survive_within_one_level() {
        for &level in &[0u8, 37, 128, 200, 255] {
            let v = level as f64 / 255.0;
            let img = ImageBuffer::constant(48, 32, [v; 3]);
            for quality in [50, 80, 100] {
                let out = roundtrip(&img, quality);
                let tol = 1.0 / 255.0 + 1e-12;
                for &s in out.data() {
                    assert!(
                        (s - v).abs() <= tol,
                        "level {level} quality {quality}: {s} vs {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn quality_100_is_high_fidelity() {
        let img = textured(96, 80, 0.4);
        let out = roundtrip(&img, 100);
        let p = psnr(&img, &out);
        assert!(p >= 40.0, "quality 100 PSNR {p}");
    }

    #[test]
    fn psnr_is_monotone_in_quality_on_textured_images() {
        for phase in [0.0, 1.3, 2.9] {
            let img = textured(112, 96, phase);
            let ladder: Vec<f64> = [30, 50, 80, 90, 100]
                .iter()
                .map(|&q| psnr(&img, &roundtrip(&img, q)))
                .collect();
            for pair in ladder.windows(2) {
                assert!(
                    pair[0] <= pair[1] + 1e-9,
                    "ladder not monotone: {ladder:?}"
                );
            }
        }
    }

    #[test]
    fn odd_dimensions_are_padded_and_cropped_back() {
        let img = textured(30, 22, 0.7);
        let out = roundtrip(&img, 90);
        assert_eq!((out.width(), out.height()), (30, 22));
        assert!(psnr(&img, &out) > 25.0);
    }

    #[test]
    fn output_lands_on_the_8_bit_grid() {
        let img = textured(32, 32, 1.1);
        let out = roundtrip(&img, 75);
        for &v in out.data() {
            let scaled = v * 255.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }
}
