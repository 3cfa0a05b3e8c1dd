//! Registration of multitemporal aerial image pairs with segmentation-derived
//! semantic features.
//!
//! A segmentation network's intermediate feature map supplies one descriptor
//! per feature cell; receptive-field geometry turns each cell into an image
//! keypoint, and the network's class mask labels it. Descriptors are matched
//! per class after L2 / PCA / L2 conditioning, and a query -> reference
//! transform is fitted with RANSAC.
//!
//! - [`tensor_io`]: STF tensors and PGM/PPM rasters.
//! - [`rf_geom`]: receptive-field arithmetic and keypoint placement.
//! - [`features`]: mask thresholding and feature assembly.
//! - [`descriptor`]: per-class normalization and PCA.
//! - [`matching`]: ratio-test nearest-neighbour matching.
//! - [`geometry`]: transforms, RANSAC, warping.
//! - [`eval`]: rotation sweeps, RMSE, Welch's t-test, checkerboards and
//!   synthetic fixtures.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod descriptor;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod matching;
pub mod pipeline;
pub mod rf_geom;
pub mod tensor_io;

pub use config::PipelineConfig;
pub use features::{ClassId, LabelMask, SegSFSet};
pub use geometry::{ModelKind, RansacParams, TransformModel};
pub use pipeline::{register, register_sets, Registration, TransformDocument};
pub use rf_geom::{KeypointMode, LayerSpec, RFState};
pub use tensor_io::{RasterImage, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] tensor_io::IoError),
    #[error(transparent)]
    Feature(#[from] features::FeatureError),
    #[error(transparent)]
    Pca(#[from] descriptor::PcaError),
    #[error(transparent)]
    Geo(#[from] geometry::GeoError),
    #[error(transparent)]
    Stats(#[from] eval::StatsError),
    #[error(transparent)]
    Layers(#[from] rf_geom::LayerParseError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for the robust-fit failures that mean "registration did not
    /// converge" rather than bad input.
    pub fn is_no_consensus(&self) -> bool {
        matches!(
            self,
            Error::Geo(geometry::GeoError::NoConsensus { .. })
                | Error::Geo(geometry::GeoError::NotEnoughMatches { .. })
        )
    }
}
