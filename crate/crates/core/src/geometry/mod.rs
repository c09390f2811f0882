//! Pinhole cameras, rigid and similarity transforms, homographies and
//! disparity normalization. Everything here is double precision and pure.

mod camera;
mod disparity;
mod homography;
mod transform;

pub use camera::{project, unproject, CameraFrame, CameraRecord, CameraIntrinsics, CameraPath, Projection, RigidPose};
pub use disparity::{normalize_disparity, DisparityRange};
pub use homography::{fit_homography, Homography};
pub use transform::{interpolate_transform, slerp, SimilarityTransform};

use thiserror::Error;

/// Smallest camera-space depth treated as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (camera-space depth {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid camera path: {0}")]
    InvalidPath(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
}
