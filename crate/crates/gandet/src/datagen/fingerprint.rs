use crate::augment::Image;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Synthetic generator fingerprint: a low-amplitude periodic 2D lattice
/// (crossed gratings). Period and orientation define a "generator family";
/// amplitude
/// keeps fakes visually near-identical to their pristine sources while
/// leaving sharp spectral peaks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerprintSpec {
    pub family_id: String,
    /// Lattice period in pixels, >= 2.
    pub period: u32,
    /// Peak signal amplitude in intensity units, 0 < a <= 0.05.
    pub amplitude: f64,
    pub orientation_degrees: f64,
    pub phase: f64,
    /// Relative weights of the harmonics (fundamental first).
    pub harmonic_weights: Vec<f64>,
}

impl Default for FingerprintSpec {
    fn default() -> Self {
        FingerprintSpec {
            family_id: "family_a".into(),
            period: 4,
            amplitude: 0.03,
            orientation_degrees: 0.0,
            phase: 0.0,
            harmonic_weights: vec![1.0, 0.3],
        }
    }
}

impl FingerprintSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config(format!(
                "fingerprint period must be >= 2 px, got {}",
                self.period
            )));
        }
        if !(0.0..=0.05).contains(&self.amplitude) {
            return Err(Error::Config(format!(
                "fingerprint amplitude must lie in (0, 0.05] (0 allowed as identity), got {}",
                self.amplitude
            )));
        }
        if self.harmonic_weights.is_empty() {
            return Err(Error::Config("at least one harmonic weight required".into()));
        }
        if self.harmonic_weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Config("harmonic weights must be non-negative".into()));
        }
        if self.harmonic_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("harmonic weights must not all be zero".into()));
        }
        Ok(())
    }

    /// Lattice value at pixel (y, x); bounded by `amplitude` in magnitude.
    /// The lattice is two-dimensional: equal gratings along the orientation
    /// axis and its perpendicular, like the pixel grids left by upsampling.
    pub fn signal_at(&self, y: usize, x: usize) -> f64 {
        let theta = self.orientation_degrees.to_radians();
        let proj_u = x as f64 * theta.cos() + y as f64 * theta.sin();
        let proj_v = -(x as f64) * theta.sin() + y as f64 * theta.cos();
        let wsum: f64 = self.harmonic_weights.iter().sum();
        let mut s = 0.0;
        for (k, w) in self.harmonic_weights.iter().enumerate() {
            let freq = (k + 1) as f64 / self.period as f64;
            let arg_u = std::f64::consts::TAU * freq * proj_u + self.phase;
            let arg_v = std::f64::consts::TAU * freq * proj_v + self.phase;
            s += w * 0.5 * (arg_u.cos() + arg_v.cos());
        }
        self.amplitude * s / wsum
    }
}

/// Add the fingerprint lattice to all channels, clamped to [0,1].
/// Amplitude 0 is a bit-exact identity.
pub fn inject_fingerprint(img: &Image, fp: &FingerprintSpec) -> Result<Image> {
    fp.validate()?;
    if fp.amplitude == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = (img.height(), img.width());
    let mut lattice = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            lattice[y * w + x] = fp.signal_at(y, x);
        }
    }
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let plane = img.channel(c);
        for i in 0..h * w {
            data.push((plane[i] + lattice[i]).clamp(0.0, 1.0));
        }
    }
    Image::new(h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::spectrum::dft2_real;

    #[test]
    fn zero_amplitude_is_identity() {
        let img = Image::from_fn(16, 16, |c, y, x| ((c + y * x) % 9) as f64 / 8.0);
        let fp = FingerprintSpec {
            amplitude: 0.0,
            ..FingerprintSpec::default()
        };
        assert_eq!(inject_fingerprint(&img, &fp).unwrap(), img);
    }

    #[test]
    fn on_mid_gray_delta_equals_the_lattice() {
        let img = Image::constant(24, 24, 0.5);
        let fp = FingerprintSpec::default();
        let out = inject_fingerprint(&img, &fp).unwrap();
        for y in 0..24 {
            for x in 0..24 {
                let expect = fp.signal_at(y, x);
                for c in 0..3 {
                    let got = out.get(c, y, x) - 0.5;
                    assert!((got - expect).abs() < 1e-12, "({y},{x}) {got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn spectrum_of_delta_peaks_at_the_fundamental() {
        let n = 32;
        let img = Image::constant(n, n, 0.5);
        let fp = FingerprintSpec {
            period: 4,
            orientation_degrees: 0.0,
            harmonic_weights: vec![1.0, 0.25],
            ..FingerprintSpec::default()
        };
        let out = inject_fingerprint(&img, &fp).unwrap();
        let delta: Vec<f64> = out
            .channel(0)
            .iter()
            .zip(img.channel(0))
            .map(|(a, b)| a - b)
            .collect();
        let spec = dft2_real(&delta, n, n);
        let (mut best, mut best_mag) = (0, 0.0);
        for (i, c) in spec.iter().enumerate() {
            if c.abs() > best_mag {
                best_mag = c.abs();
                best = i;
            }
        }
        // fundamental at 1/4 cycles/px along each lattice axis: bin (0, n/4)
        // or (n/4, 0), or their mirrors
        let (ky, kx) = (best / n, best % n);
        let on_axis = |k: usize| k == n / 4 || k == n - n / 4;
        assert!(
            (ky == 0 && on_axis(kx)) || (kx == 0 && on_axis(ky)),
            "peak at ({ky},{kx})"
        );
        // the perpendicular grating leaves an equal peak on the other axis
        let twin = spec[(best % n) * n + best / n].abs();
        assert!((twin - best_mag).abs() < 1e-9 * best_mag.max(1.0));
    }

    #[test]
    fn amplitude_bound_is_enforced() {
        let fp = FingerprintSpec {
            amplitude: 0.2,
            ..FingerprintSpec::default()
        };
        let img = Image::constant(8, 8, 0.5);
        assert!(inject_fingerprint(&img, &fp).is_err());
    }
}
