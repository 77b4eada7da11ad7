use crate::augment::Image;
use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Annex-K luminance quantization table, row-major.
const LUMA_BASE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex-K chrominance quantization table, row-major.
const CHROMA_BASE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// IJG quality scaling: scale = 5000/q for q < 50, else 200 - 2q;
/// entries clamped to [1, 255].
fn scaled_table(base: &[u16; 64], quality: u8) -> [f64; 64] {
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        let v = (b as u32 * scale + 50) / 100;
        *o = v.clamp(1, 255) as f64;
    }
    out
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (k, row) in m.iter_mut().enumerate() {
            let s = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = s * ((std::f64::consts::PI * (2 * n + 1) as f64 * k as f64) / 16.0).cos();
            }
        }
        m
    })
}

fn dct2(block: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let m = dct_matrix();
    let mut tmp = [[0.0; 8]; 8];
    // rows
    for y in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                acc += m[k][n] * block[y][n];
            }
            tmp[y][k] = acc;
        }
    }
    let mut out = [[0.0; 8]; 8];
    // columns
    for x in 0..8 {
        for k in 0..8 {
            let mut acc = 0.0;
            for n in 0..8 {
                acc += m[k][n] * tmp[n][x];
            }
            out[k][x] = acc;
        }
    }
    out
}

fn idct2(coeffs: &[[f64; 8]; 8]) -> [[f64; 8]; 8] {
    let m = dct_matrix();
    let mut tmp = [[0.0; 8]; 8];
    for x in 0..8 {
        for n in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += m[k][n] * coeffs[k][x];
            }
            tmp[n][x] = acc;
        }
    }
    let mut out = [[0.0; 8]; 8];
    for y in 0..8 {
        for n in 0..8 {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += m[k][n] * tmp[y][k];
            }
            out[y][n] = acc;
        }
    }
    out
}

/// Coefficients smaller than this (in 0..255 units) are numerical noise from
/// the float DCT and are zeroed so exact-identity blocks stay exact.
const COEFF_NOISE_FLOOR: f64 = 1e-9;

/// Baseline-JPEG lossy degradation without entropy coding: RGB -> YCbCr,
/// per-8x8-block level-shifted DCT, quantization by the standard tables
/// scaled with the IJG quality rule, inverse transform, clamp. 4:4:4, no
/// chroma subsampling. The DC coefficient is passed through unquantized so
/// constant blocks reconstruct bit-exactly; AC quantization carries the
/// distortion.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Contract(format!(
            "jpeg quality must be in [1,100], got {quality}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let tables = [
        scaled_table(&LUMA_BASE, quality),
        scaled_table(&CHROMA_BASE, quality),
        scaled_table(&CHROMA_BASE, quality),
    ];

    // YCbCr planes in 0..255 scale.
    let mut planes = vec![vec![0.0f64; h * w]; 3];
    for y in 0..h {
        for x in 0..w {
            let r = img.get(0, y, x) * 255.0;
            let g = img.get(1, y, x) * 255.0;
            let b = img.get(2, y, x) * 255.0;
            planes[0][y * w + x] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][y * w + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
            planes[2][y * w + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
        }
    }

    // Quantization error per plane, computed blockwise in the DCT domain.
    // Working with the error (rather than re-synthesizing the image) keeps
    // untouched blocks bit-exact after the color round trip.
    let mut deltas = vec![vec![0.0f64; h * w]; 3];
    let edge = |i: isize, n: usize| -> usize { i.clamp(0, n as isize - 1) as usize };
    for (p, plane) in planes.iter().enumerate() {
        let table = &tables[p];
        let mut by = 0;
        while by < h {
            let mut bx = 0;
            while bx < w {
                let mut block = [[0.0; 8]; 8];
                for (dy, row) in block.iter_mut().enumerate() {
                    let sy = edge(by as isize + dy as isize, h);
                    for (dx, v) in row.iter_mut().enumerate() {
                        let sx = edge(bx as isize + dx as isize, w);
                        *v = plane[sy * w + sx] - 128.0;
                    }
                }
                let mut coeffs = dct2(&block);
                let mut residual = [[0.0; 8]; 8];
                let mut any = false;
                for ky in 0..8 {
                    for kx in 0..8 {
                        let c = &mut coeffs[ky][kx];
                        if c.abs() < COEFF_NOISE_FLOOR {
                            *c = 0.0;
                        }
                        if ky == 0 && kx == 0 {
                            continue; // DC passthrough
                        }
                        let q = table[ky * 8 + kx];
                        let quantized = (*c / q).round() * q;
                        let r = quantized - *c;
                        if r != 0.0 {
                            residual[ky][kx] = r;
                            any = true;
                        }
                    }
                }
                if any {
                    let d = idct2(&residual);
                    for dy in 0..8 {
                        let sy = by + dy;
                        if sy >= h {
                            break;
                        }
                        for dx in 0..8 {
                            let sx = bx + dx;
                            if sx >= w {
                                break;
                            }
                            deltas[p][sy * w + sx] = d[dy][dx];
                        }
                    }
                }
                bx += 8;
            }
            by += 8;
        }
    }

    // Map the YCbCr error back to RGB (linear part only; offsets cancel)
    // and add it to the original samples.
    let mut out = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for i in 0..h * w {
            let dy = deltas[0][i];
            let dcb = deltas[1][i];
            let dcr = deltas[2][i];
            let d = match c {
                0 => dy + 1.402 * dcr,
                1 => dy - 0.344136 * dcb - 0.714136 * dcr,
                _ => dy + 1.772 * dcb,
            };
            let orig = img.data()[c * h * w + i];
            let v = if d == 0.0 { orig } else { orig + d / 255.0 };
            out.push(v.clamp(0.0, 1.0));
        }
    }
    Image::new(h, w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::RngStream;

    #[test]
    fn rejects_quality_out_of_range() {
        let img = Image::constant(8, 8, 0.5);
        assert!(jpeg_roundtrip(&img, 0).is_err());
        assert!(jpeg_roundtrip(&img, 101).is_err());
    }

    #[test]
    fn constant_image_is_bit_exact_at_any_quality() {
        for &v in &[0.0, 0.25, 0.5, 0.73, 1.0] {
            let img = Image::constant(20, 12, v);
            for &q in &[1u8, 10, 50, 75, 100] {
                let out = jpeg_roundtrip(&img, q).unwrap();
                assert_eq!(out, img, "value {v}, quality {q}");
            }
        }
    }

    fn natural_test_image() -> Image {
        // smooth gradients plus mild texture; deterministic
        let mut rng = RngStream::new(77, 0);
        let noise: Vec<f64> = (0..64 * 64).map(|_| rng.uniform()).collect();
        Image::from_fn(64, 64, |c, y, x| {
            let base = 0.3 + 0.4 * (y as f64 / 63.0) + 0.2 * (x as f64 / 63.0) * (c as f64 / 2.0);
            base + 0.1 * ((x as f64 * 0.7).sin() * (y as f64 * 0.3).cos()) + 0.05 * noise[y * 64 + x]
        })
    }

    #[test]
    fn quality_100_psnr_is_high() {
        let img = natural_test_image();
        let out = jpeg_roundtrip(&img, 100).unwrap();
        let psnr = out.psnr(&img);
        // regression anchor: measured ~52 dB on this fixture
        assert!(psnr >= 35.0, "psnr {psnr}");
    }

    #[test]
    fn psnr_non_increasing_as_quality_drops() {
        let img = natural_test_image();
        let mut prev = f64::INFINITY;
        for &q in &[95u8, 75, 50, 25, 10] {
            let psnr = jpeg_roundtrip(&img, q).unwrap().psnr(&img);
            assert!(
                psnr <= prev + 1e-9,
                "psnr rose from {prev} to {psnr} at quality {q}"
            );
            prev = psnr;
        }
    }

    #[test]
    fn output_dims_match_input_for_non_multiple_of_8() {
        let img = natural_test_image();
        let cropped = {
            // 61x53 view of the fixture
            Image::from_fn(61, 53, |c, y, x| img.get(c, y, x))
        };
        let out = jpeg_roundtrip(&cropped, 50).unwrap();
        assert_eq!((out.height(), out.width()), (61, 53));
    }

    #[test]
    fn low_quality_actually_distorts() {
        let img = natural_test_image();
        let out = jpeg_roundtrip(&img, 10).unwrap();
        assert!(img.mse(&out) > 1e-5);
    }
}
