//! Augmentation and perturbation engine.
//!
//! Stochastic training-time view generation (photometric jitter, grayscale,
//! blur, JPEG degradation, noise, cutout, random 96x96 crops) and
//! deterministic test-time perturbations for robustness sweeps. No
//! training-time transform resamples the image grid; resizing exists only
//! as a test-time perturbation.

mod image;
mod jpeg;
mod ops;
mod views;

pub use image::Image;
pub use jpeg::jpeg_roundtrip;
#[cfg(test)]
pub(crate) use ops::crop;
pub use ops::{
    add_gaussian_noise, center_crop, color_jitter, cutout, gaussian_blur, random_crop,
    resize_bilinear, to_grayscale,
};
pub use views::{make_view, make_views, AugmentConfig, Perturbation};
