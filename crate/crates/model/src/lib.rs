//! The 3D track conditioner with hand-written gradients, a small denoiser
//! and a rectified-flow training loop over procedural scenes.

pub mod checkpoint;
pub mod conditioner;
pub mod denoiser;
pub mod flow;
pub mod gradcheck;
pub mod layers;
pub mod posenc;
pub mod scene;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("video {dims:?} is not divisible by patch {patch:?}")]
    IndivisibleDims { dims: (usize, usize, usize), patch: (usize, usize, usize) },
}
