use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Detector architecture description.
///
/// The defining constraint is the stride-1 stem: the first layer performs
/// no spatial subsampling, so high-frequency forensic traces survive into
/// the backbone. Downsampling (2x2 average pooling) happens only after the
/// stages flagged in `downsample_after_stage`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub stem_channels: usize,
    pub block_widths: Vec<usize>,
    pub blocks_per_stage: Vec<usize>,
    pub stem_stride: usize,
    pub downsample_after_stage: Vec<bool>,
    /// Projection head dims (hidden, latent). The reference pattern is
    /// 2048/128; the desk default is 256/64.
    pub projection_hidden: usize,
    pub projection_latent: usize,
    pub crop_size: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            stem_channels: 8,
            block_widths: vec![12, 16],
            blocks_per_stage: vec![1, 1],
            stem_stride: 1,
            downsample_after_stage: vec![true, false],
            projection_hidden: 256,
            projection_latent: 64,
            crop_size: 96,
        }
    }
}

impl DetectorConfig {
    /// Small configuration used by fast seeded experiments.
    pub fn toy() -> Self {
        DetectorConfig {
            stem_channels: 6,
            block_widths: vec![8],
            blocks_per_stage: vec![1],
            stem_stride: 1,
            downsample_after_stage: vec![false],
            projection_hidden: 32,
            projection_latent: 16,
            crop_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_stride != 1 {
            return Err(Error::Config(format!(
                "stem_stride must be 1 (no subsampling in the first layer), got {}",
                self.stem_stride
            )));
        }
        if self.projection_latent < 2 {
            return Err(Error::Config(format!(
                "projection_latent must be >= 2, got {}",
                self.projection_latent
            )));
        }
        if self.stem_channels == 0 || self.projection_hidden == 0 {
            return Err(Error::Config("all widths must be >= 1".into()));
        }
        if self.block_widths.is_empty() {
            return Err(Error::Config("at least one stage is required".into()));
        }
        if self.block_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("all block widths must be >= 1".into()));
        }
        if self.blocks_per_stage.len() != self.block_widths.len()
            || self.downsample_after_stage.len() != self.block_widths.len()
        {
            return Err(Error::Config(format!(
                "stage lists must agree in length: widths {}, blocks {}, downsample {}",
                self.block_widths.len(),
                self.blocks_per_stage.len(),
                self.downsample_after_stage.len()
            )));
        }
        if self.blocks_per_stage.iter().any(|&b| b == 0) {
            return Err(Error::Config("blocks_per_stage entries must be >= 1".into()));
        }
        if self.crop_size == 0 {
            return Err(Error::Config("crop_size must be >= 1".into()));
        }
        Ok(())
    }

    /// Smallest input side the network accepts: every 2x2 pooling stage
    /// needs at least 2 pixels to pool.
    pub fn min_input_size(&self) -> usize {
        let pools = self
            .downsample_after_stage
            .iter()
            .filter(|&&d| d)
            .count() as u32;
        2usize.pow(pools)
    }
}
