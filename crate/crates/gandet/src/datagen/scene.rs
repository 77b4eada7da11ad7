use crate::augment::Image;
use crate::datagen::spectrum::{idft2_real, Complex};
use crate::error::{Error, Result};
use crate::tensorcore::RngStream;
use serde::{Deserialize, Serialize};

/// Procedural "pristine" scene description: colored 1/f^alpha noise
/// composited with smooth gradients and soft shapes, mapped through a
/// small palette.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub size: usize,
    /// Spectral amplitude falls off as 1/f^alpha; alpha in [0.5, 2].
    pub spectral_exponent: f64,
    /// 2-4 base colors, RGB in [0,1].
    pub palette: Vec<[f64; 3]>,
    pub gradient_count: usize,
    pub shape_count: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            size: 48,
            spectral_exponent: 1.2,
            palette: vec![[0.15, 0.25, 0.4], [0.55, 0.5, 0.35], [0.85, 0.8, 0.7]],
            gradient_count: 2,
            shape_count: 3,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("scene size must be positive".into()));
        }
        if !(0.5..=2.0).contains(&self.spectral_exponent) {
            return Err(Error::Config(format!(
                "spectral_exponent must lie in [0.5, 2], got {}",
                self.spectral_exponent
            )));
        }
        if !(2..=4).contains(&self.palette.len()) {
            return Err(Error::Config(format!(
                "palette needs 2-4 colors, got {}",
                self.palette.len()
            )));
        }
        for c in &self.palette {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("palette colors must lie in [0,1]".into()));
            }
        }
        Ok(())
    }
}

/// 1/f^alpha scalar field in [0,1], min-max normalized.
fn spectral_field(size: usize, alpha: f64, rng: &mut RngStream) -> Vec<f64> {
    let n = size;
    let mut spec = vec![Complex::ZERO; n * n];
    for ky in 0..n {
        for kx in 0..n {
            if ky == 0 && kx == 0 {
                continue;
            }
            // symmetric frequency coordinates
            let fy = if ky <= n / 2 { ky as f64 } else { (n - ky) as f64 };
            let fx = if kx <= n / 2 { kx as f64 } else { (n - kx) as f64 };
            let f = (fy * fy + fx * fx).sqrt() / n as f64;
            let amp = f.powf(-alpha);
            spec[ky * n + kx] = Complex::new(amp * rng.normal(), amp * rng.normal());
        }
    }
    let field = idft2_real(&spec, n, n);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &field {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    field.into_iter().map(|v| (v - lo) / span).collect()
}

/// Deterministic procedural scene; stand-in for a pristine photograph.
pub fn synth_real(spec: &SceneSpec, rng: &RngStream) -> Result<Image> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = rng.child("scene");
    let mut field = spectral_field(n, spec.spectral_exponent, &mut rng);

    // smooth linear gradients modulate the field
    for _ in 0..spec.gradient_count {
        let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
        let strength = rng.uniform_range(0.1, 0.35);
        let (dy, dx) = (theta.sin(), theta.cos());
        for y in 0..n {
            for x in 0..n {
                let t = (dy * y as f64 + dx * x as f64) / n as f64;
                field[y * n + x] = (field[y * n + x] + strength * t).clamp(0.0, 1.0);
            }
        }
    }

    // soft elliptical bumps
    for _ in 0..spec.shape_count {
        let cy = rng.uniform_range(0.0, n as f64);
        let cx = rng.uniform_range(0.0, n as f64);
        let ry = rng.uniform_range(0.1, 0.35) * n as f64;
        let rx = rng.uniform_range(0.1, 0.35) * n as f64;
        let amp = rng.uniform_range(-0.3, 0.3);
        for y in 0..n {
            for x in 0..n {
                let d = ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2);
                if d < 1.0 {
                    let falloff = (1.0 - d).powi(2);
                    field[y * n + x] = (field[y * n + x] + amp * falloff).clamp(0.0, 1.0);
                }
            }
        }
    }

    // palette mapping: interpolate between adjacent palette colors
    let k = spec.palette.len();
    let mut data = vec![0.0; 3 * n * n];
    for (i, &t) in field.iter().enumerate() {
        let scaled = t * (k - 1) as f64;
        let lo = (scaled.floor() as usize).min(k - 2);
        let frac = scaled - lo as f64;
        for c in 0..3 {
            let v = spec.palette[lo][c] * (1.0 - frac) + spec.palette[lo + 1][c] * frac;
            data[c * n * n + i] = v.clamp(0.0, 1.0);
        }
    }
    Image::new(n, n, data)
}
