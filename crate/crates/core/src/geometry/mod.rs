//! Transform models, least-squares and RANSAC estimation, and image warping.

mod ransac;
mod transform;
mod warp;

use thiserror::Error;

pub use ransac::{ransac_fit, reprojection_error, required_iterations, RansacParams, RansacResult};
pub use transform::{
    apply_transform, estimate_affine_lsq, estimate_homography_lsq, estimate_lsq,
    is_degenerate_sample, Correspondence, ModelKind, Point, TransformModel,
};
pub use warp::warp_image;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeoError {
    #[error("degenerate configuration")]
    Degenerate,
    #[error("not enough matches: got {got}, need {need}")]
    NotEnoughMatches { got: usize, need: usize },
    #[error("no consensus: best model has {best} inliers, need {need}")]
    NoConsensus { best: usize, need: usize },
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("transform is singular")]
    Singular,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
}
