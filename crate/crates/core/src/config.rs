use serde::{Deserialize, Serialize};

use crate::descriptor::DEFAULT_PCA_DIM;
use crate::features::ClassId;
use crate::geometry::{ModelKind, RansacParams};
use crate::matching::{MatchParams, DEFAULT_RATIO};
use crate::rf_geom::{chain, resnet34_decoder3_preset, KeypointMode, LayerSpec, RFState};
use crate::Error;

pub const DEFAULT_MASK_THRESHOLD: f32 = 0.5;

/// Everything a registration run needs besides its input tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub layers: Vec<LayerSpec>,
    pub keypoint_mode: KeypointMode,
    /// Classes that take part in matching; `None` means all present.
    pub classes: Option<Vec<ClassId>>,
    pub pca_dim: usize,
    pub ratio: f64,
    pub cross_check: bool,
    pub model: ModelKind,
    pub ransac: RansacParams,
    pub grid_stride: usize,
    pub mask_threshold: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            layers: resnet34_decoder3_preset(),
            keypoint_mode: KeypointMode::JumpCenter,
            classes: None,
            pca_dim: DEFAULT_PCA_DIM,
            ratio: DEFAULT_RATIO,
            cross_check: false,
            model: ModelKind::Affine,
            ransac: RansacParams::default(),
            grid_stride: 1,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.pca_dim == 0 {
            return bad("pca dimension must be >= 1".into());
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad(format!("ratio must be in (0, 1], got {}", self.ratio));
        }
        if self.grid_stride == 0 {
            return bad("grid stride must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mask_threshold) {
            return bad(format!(
                "mask threshold must be in [0, 1], got {}",
                self.mask_threshold
            ));
        }
        self.ransac.validate()?;
        Ok(())
    }

    pub fn rf_state(&self) -> RFState {
        chain(&self.layers)
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            ratio: self.ratio,
            pca_dim: self.pca_dim,
            cross_check: self.cross_check,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_method_constants() {
        let c = PipelineConfig::default();
        assert_eq!(c.ratio, 0.7);
        assert_eq!(c.pca_dim, 100);
        assert_eq!(c.model, ModelKind::Affine);
        assert_eq!(c.mask_threshold, 0.5);
        assert_eq!(c.rf_state().jump, 8);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_fields() {
        for c in [
            PipelineConfig {
                ratio: 0.0,
                ..Default::default()
            },
            PipelineConfig {
                ratio: 1.5,
                ..Default::default()
            },
            PipelineConfig {
                pca_dim: 0,
                ..Default::default()
            },
            PipelineConfig {
                grid_stride: 0,
                ..Default::default()
            },
            PipelineConfig {
                mask_threshold: 2.0,
                ..Default::default()
            },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
