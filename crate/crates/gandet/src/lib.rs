//! Universal GAN-image detector at desk scale.
//!
//! The pipeline: a stride-1-stem convolutional detector trained in two
//! phases (contrastive pretraining over augmented view pairs, then
//! supervised fine-tuning), evaluated with AUC / fixed-threshold accuracy /
//! Pd@FAR and robustness sweeps, on a procedurally generated corpus where
//! "GAN fingerprints" are injected as low-amplitude periodic lattices.

pub mod augment;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod netarch;
pub mod tensorcore;
pub mod training;

pub use error::{Error, Result};
