//! Core building blocks for editing videos represented as 3D point tracks.
//!
//! The crate is organised bottom-up: [`geometry`] holds the camera math every
//! other module relies on, [`tracks`] the data model and project files,
//! [`edit`] the declarative motion edits, [`augment`] training-time
//! perturbations, [`preview`] the point-cloud warp renderer and [`metrics`]
//! the evaluation scores.

pub mod augment;
pub mod edit;
pub mod geometry;
pub mod metrics;
pub mod preview;
pub mod rng;
pub mod tracks;

pub use geometry::{CameraIntrinsics, CameraPath, Homography, RigidPose, SimilarityTransform};
pub use tracks::{ClipPair, ProjectedTracks, TrackSet, VideoClip};
