use crate::augment::{
    add_gaussian_noise, color_jitter, cutout, gaussian_blur, jpeg_roundtrip, random_crop,
    resize_bilinear, to_grayscale, Image,
};
use crate::error::{Error, Result};
use crate::tensorcore::RngStream;
use serde::{Deserialize, Serialize};

/// Training-time augmentation configuration.
///
/// Each transform fires independently with its probability; parameters are
/// drawn uniformly from the listed ranges. Ranges are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_color_jitter: f64,
    pub p_grayscale: f64,
    pub p_blur: f64,
    pub p_jpeg: f64,
    pub p_noise: f64,
    pub p_cutout: f64,
    pub jpeg_quality: [u8; 2],
    pub blur_sigma: [f64; 2],
    pub brightness: [f64; 2],
    pub contrast: [f64; 2],
    pub saturation: [f64; 2],
    pub hue_degrees: [f64; 2],
    pub noise_sigma: [f64; 2],
    /// Cutout square side, as a fraction of crop_size.
    pub cutout_frac: [f64; 2],
    pub crop_size: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_color_jitter: 0.5,
            p_grayscale: 0.1,
            p_blur: 0.5,
            p_jpeg: 0.5,
            p_noise: 0.5,
            p_cutout: 0.5,
            jpeg_quality: [30, 100],
            blur_sigma: [0.0, 3.0],
            brightness: [0.7, 1.3],
            contrast: [0.7, 1.3],
            saturation: [0.7, 1.3],
            hue_degrees: [-18.0, 18.0],
            noise_sigma: [0.0, 0.06],
            cutout_frac: [0.10, 0.40],
            crop_size: 96,
        }
    }
}

impl AugmentConfig {
    /// All transform probabilities zero; views become plain random crops.
    pub fn disabled(crop_size: usize) -> Self {
        AugmentConfig {
            p_color_jitter: 0.0,
            p_grayscale: 0.0,
            p_blur: 0.0,
            p_jpeg: 0.0,
            p_noise: 0.0,
            p_cutout: 0.0,
            crop_size,
            ..AugmentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_color_jitter", self.p_color_jitter),
            ("p_grayscale", self.p_grayscale),
            ("p_blur", self.p_blur),
            ("p_jpeg", self.p_jpeg),
            ("p_noise", self.p_noise),
            ("p_cutout", self.p_cutout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "augment.{name} must be in [0,1], got {p}"
                )));
            }
        }
        if self.jpeg_quality[0] < 1 || self.jpeg_quality[1] > 100 {
            return Err(Error::Config(format!(
                "augment.jpeg_quality must be within [1,100], got {:?}",
                self.jpeg_quality
            )));
        }
        if self.jpeg_quality[0] > self.jpeg_quality[1] {
            return Err(Error::Config("augment.jpeg_quality range is inverted".into()));
        }
        for (name, r) in [
            ("blur_sigma", self.blur_sigma),
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
            ("hue_degrees", self.hue_degrees),
            ("noise_sigma", self.noise_sigma),
            ("cutout_frac", self.cutout_frac),
        ] {
            if r[0] > r[1] {
                return Err(Error::Config(format!(
                    "augment.{name} range {:?} is inverted",
                    r
                )));
            }
        }
        if self.crop_size == 0 {
            return Err(Error::Config("augment.crop_size must be positive".into()));
        }
        Ok(())
    }
}

/// One stochastic augmentation chain (everything but the final crop).
fn augment_once(img: &Image, cfg: &AugmentConfig, rng: &mut RngStream) -> Result<Image> {
    let mut out = img.clone();
    if rng.coin(cfg.p_color_jitter) {
        let b = rng.uniform_range(cfg.brightness[0], cfg.brightness[1]);
        let c = rng.uniform_range(cfg.contrast[0], cfg.contrast[1]);
        let s = rng.uniform_range(cfg.saturation[0], cfg.saturation[1]);
        let h = rng.uniform_range(cfg.hue_degrees[0], cfg.hue_degrees[1]);
        out = color_jitter(&out, b, c, s, h)?;
    }
    if rng.coin(cfg.p_grayscale) {
        out = to_grayscale(&out);
    }
    if rng.coin(cfg.p_blur) {
        let sigma = rng.uniform_range(cfg.blur_sigma[0], cfg.blur_sigma[1]);
        out = gaussian_blur(&out, sigma);
    }
    if rng.coin(cfg.p_jpeg) {
        let q = cfg.jpeg_quality[0]
            + rng.index((cfg.jpeg_quality[1] - cfg.jpeg_quality[0] + 1) as usize) as u8;
        out = jpeg_roundtrip(&out, q)?;
    }
    if rng.coin(cfg.p_noise) {
        let sigma = rng.uniform_range(cfg.noise_sigma[0], cfg.noise_sigma[1]);
        out = add_gaussian_noise(&out, sigma, rng);
    }
    if rng.coin(cfg.p_cutout) {
        let frac = rng.uniform_range(cfg.cutout_frac[0], cfg.cutout_frac[1]);
        let side = ((cfg.crop_size as f64 * frac).round() as usize).max(1);
        let x = rng.index(out.width()) as isize - (side / 2) as isize;
        let y = rng.index(out.height()) as isize - (side / 2) as isize;
        out = cutout(&out, x, y, side, side, 0.5);
    }
    Ok(out)
}

/// Two independently augmented views of one source image, each cropped to
/// crop_size x crop_size. Deterministic given the rng stream.
pub fn make_views(img: &Image, cfg: &AugmentConfig, rng: &RngStream) -> Result<(Image, Image)> {
    cfg.validate()?;
    let make = |label: &str| -> Result<Image> {
        let mut r = rng.child(label);
        let aug = augment_once(img, cfg, &mut r)?;
        random_crop(&aug, cfg.crop_size, &mut r)
    };
    Ok((make("view0")?, make("view1")?))
}

/// One augmented training view; identical to the first view of
/// [`make_views`] on the same stream.
pub fn make_view(img: &Image, cfg: &AugmentConfig, rng: &RngStream) -> Result<Image> {
    cfg.validate()?;
    let mut r = rng.child("view0");
    let aug = augment_once(img, cfg, &mut r)?;
    random_crop(&aug, cfg.crop_size, &mut r)
}

/// Deterministic test-time perturbation for robustness sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    None,
    Jpeg { quality: u8 },
    Rescale { scale: f64 },
}

impl Perturbation {
    pub fn apply(&self, img: &Image) -> Result<Image> {
        match *self {
            Perturbation::None => Ok(img.clone()),
            Perturbation::Jpeg { quality } => jpeg_roundtrip(img, quality),
            Perturbation::Rescale { scale } => resize_bilinear(img, scale),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Perturbation::None => "none".into(),
            Perturbation::Jpeg { quality } => format!("jpeg_q{quality}"),
            Perturbation::Rescale { scale } => format!("rescale_{scale}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::crop;

    fn source() -> Image {
        Image::from_fn(48, 48, |c, y, x| {
            0.2 + 0.5 * ((x + y) as f64 / 94.0) + 0.05 * c as f64
        })
    }

    #[test]
    fn all_probabilities_zero_yields_plain_crops() {
        let img = source();
        let cfg = AugmentConfig::disabled(32);
        let rng = RngStream::new(10, 0);
        let (a, b) = make_views(&img, &cfg, &rng).unwrap();
        // reproduce the crop offsets by replaying the child streams
        for (label, view) in [("view0", &a), ("view1", &b)] {
            let mut r = rng.child(label);
            // augment_once consumed six coin draws
            for _ in 0..6 {
                r.coin(0.0);
            }
            let oy = r.index(48 - 32 + 1);
            let ox = r.index(48 - 32 + 1);
            assert_eq!(*view, crop(&img, oy, ox, 32));
        }
    }

    #[test]
    fn fixed_seed_reproduces_view_pair() {
        let img = source();
        let cfg = AugmentConfig {
            crop_size: 32,
            ..AugmentConfig::default()
        };
        let rng = RngStream::new(11, 5);
        let (a1, b1) = make_views(&img, &cfg, &rng).unwrap();
        let (a2, b2) = make_views(&img, &cfg, &rng).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn views_have_configured_crop_size() {
        let img = Image::from_fn(128, 128, |_, y, x| ((x ^ y) & 0xff) as f64 / 255.0);
        let cfg = AugmentConfig::default();
        let rng = RngStream::new(12, 0);
        let (a, b) = make_views(&img, &cfg, &rng).unwrap();
        assert_eq!((a.height(), a.width()), (96, 96));
        assert_eq!((b.height(), b.width()), (96, 96));
    }

    #[test]
    fn views_stay_in_range_under_heavy_augmentation() {
        let img = source();
        let mut cfg = AugmentConfig {
            crop_size: 32,
            ..AugmentConfig::default()
        };
        cfg.p_color_jitter = 1.0;
        cfg.p_blur = 1.0;
        cfg.p_jpeg = 1.0;
        cfg.p_noise = 1.0;
        cfg.p_cutout = 1.0;
        for seed in 0..10 {
            let rng = RngStream::new(seed, 0);
            let (a, b) = make_views(&img, &cfg, &rng).unwrap();
            for v in a.data().iter().chain(b.data()) {
                assert!((0.0..=1.0).contains(v) && v.is_finite());
            }
        }
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = AugmentConfig::default();
        cfg.jpeg_quality = [0, 80];
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentConfig::default();
        cfg.blur_sigma = [2.0, 1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentConfig::default();
        cfg.p_noise = 1.5;
        assert!(cfg.validate().is_err());
    }
}
