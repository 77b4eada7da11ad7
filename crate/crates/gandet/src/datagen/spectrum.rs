//! Small direct DFT helpers for spectral synthesis and analysis.
//! O(N^3) row-column transforms; fine at desk-scale image sizes and
//! bit-deterministic across platforms (no SIMD dispatch).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    pub fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    pub fn add(self, other: Complex) -> Complex {
        Complex {
            re: self.re + other.re,
            im: self.im + other.im,
        }
    }

    #[cfg(test)]
    pub fn abs(self) -> f64 {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

fn dft_1d(input: &[Complex], inverse: bool) -> Vec<Complex> {
    let n = input.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex::ZERO;
        for (j, &x) in input.iter().enumerate() {
            let angle = sign * 2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
            acc = acc.add(x.mul(Complex::new(angle.cos(), angle.sin())));
        }
        if inverse {
            acc.re /= n as f64;
            acc.im /= n as f64;
        }
        out.push(acc);
    }
    out
}

fn transform_2d(data: &[Complex], h: usize, w: usize, inverse: bool) -> Vec<Complex> {
    debug_assert_eq!(data.len(), h * w);
    let mut rows: Vec<Complex> = Vec::with_capacity(h * w);
    for y in 0..h {
        rows.extend(dft_1d(&data[y * w..(y + 1) * w], inverse));
    }
    let mut out = vec![Complex::ZERO; h * w];
    let mut col = vec![Complex::ZERO; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        let t = dft_1d(&col, inverse);
        for y in 0..h {
            out[y * w + x] = t[y];
        }
    }
    out
}

/// Forward 2-D DFT of a real field, row-major h x w.
#[cfg(test)]
pub fn dft2_real(field: &[f64], h: usize, w: usize) -> Vec<Complex> {
    let data: Vec<Complex> = field.iter().map(|&v| Complex::new(v, 0.0)).collect();
    transform_2d(&data, h, w, false)
}

/// Inverse 2-D DFT, returning the real parts.
pub fn idft2_real(spectrum: &[Complex], h: usize, w: usize) -> Vec<f64> {
    transform_2d(spectrum, h, w, true)
        .into_iter()
        .map(|c| c.re)
        .collect()
}
