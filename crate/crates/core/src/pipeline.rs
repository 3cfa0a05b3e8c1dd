//! Feature assembly, class-conditioned matching and robust fitting for one
//! query/reference pair.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::features::{assemble_features, select_classes, LabelMask, SegSFSet};
use crate::geometry::{ransac_fit, Correspondence, GeoError, ModelKind, TransformModel};
use crate::matching::{match_all, MatchSet};
use crate::tensor_io::Tensor;
use crate::Error;

/// Builds the feature set for one image, restricted to the configured classes.
pub fn extract_features(
    fmap: &Tensor,
    mask: &LabelMask,
    config: &PipelineConfig,
) -> Result<SegSFSet, Error> {
    let set = assemble_features(fmap, mask, &config.rf_state(), config.keypoint_mode)?;
    Ok(match &config.classes {
        Some(classes) => select_classes(&set, classes),
        None => set,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub model: TransformModel,
    pub matches: MatchSet,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    pub iterations: usize,
}

impl Registration {
    pub fn document(&self, seed: u64) -> TransformDocument {
        TransformDocument::new(&self.model, self.inlier_count, self.matches.len(), seed)
    }
}

/// Matches two feature sets and fits the query -> reference transform.
///
/// Fails with [`GeoError::NotEnoughMatches`] or [`GeoError::NoConsensus`]
/// (wrapped in [`Error::Geo`]) when no model can be supported.
pub fn register_sets(
    query: &SegSFSet,
    reference: &SegSFSet,
    config: &PipelineConfig,
) -> Result<Registration, Error> {
    config.validate()?;
    let matches = match_all(
        query,
        reference,
        config.classes.as_deref(),
        &config.match_params(),
    );
    let pairs: Vec<Correspondence> = matches
        .pairs
        .iter()
        .map(|m| (m.query, m.reference))
        .collect();
    let fit = ransac_fit(&pairs, config.model, &config.ransac)?;
    Ok(Registration {
        model: fit.model,
        matches,
        inliers: fit.inliers,
        inlier_count: fit.inlier_count,
        iterations: fit.iterations,
    })
}

/// Full run from tensors: assemble both feature sets and register them.
pub fn register(
    query_fmap: &Tensor,
    query_mask: &LabelMask,
    ref_fmap: &Tensor,
    ref_mask: &LabelMask,
    config: &PipelineConfig,
) -> Result<Registration, Error> {
    let q = extract_features(query_fmap, query_mask, config)?;
    let r = extract_features(ref_fmap, ref_mask, config)?;
    register_sets(&q, &r, config)
}

/// Serialized transform. `matrix` is row-major; numbers are written with
/// round-trip precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformDocument {
    pub kind: ModelKind,
    pub matrix: [f64; 9],
    pub inlier_count: usize,
    pub match_count: usize,
    pub seed: u64,
}

impl TransformDocument {
    pub fn new(model: &TransformModel, inlier_count: usize, match_count: usize, seed: u64) -> Self {
        Self {
            kind: model.kind(),
            matrix: model.row_major(),
            inlier_count,
            match_count,
            seed,
        }
    }

    pub fn model(&self) -> Result<TransformModel, GeoError> {
        TransformModel::from_row_major(self.kind, self.matrix)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
