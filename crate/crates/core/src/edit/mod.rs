//! Declarative motion edits: an [`EditSpec`] lists operations that turn the
//! source tracks and camera into target tracks and camera.
//!
//! Object edits never touch cameras and camera edits never touch tracks.
//! Every operation leaves tracks it did not select bit-identical.

mod apply;
mod keyframes;
mod ops;
mod spec;

pub use apply::{apply_edit_spec, edit_timeline, EditOutcome, EditState, ResolvedHandle, ResolvedOp};
pub use keyframes::Keyframes;
pub use ops::{
    apply_lbs_deform, apply_rigid_edit, default_lbs_radius, drop_tracks, duplicate_object, edit_camera_path, freeze_background, lbs_displacement,
    remove_object, select_tracks, transfer_tracks, CameraEdit, CameraEditMode, IntrinsicsOverride, LbsHandle, LBS_EPSILON, REMOVAL_OFFSET_WIDTHS,
};
pub use spec::{canonicalize, BoxSelection, EditOp, EditSpec, Selection};

use thiserror::Error;

use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EditError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("selection resolved to no tracks")]
    EmptySelection,
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("replacement has {found} tracks/frames, expected {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("dropping these tracks would leave an empty set")]
    WouldBeEmpty,
    #[error("LBS handle sets overlap")]
    OverlappingHandles,
    #[error("keyframe frame {frame} outside clip of {frames} frames")]
    KeyframeOutOfRange { frame: usize, frames: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("ops[{index}]: {source}")]
    InOp {
        index: usize,
        #[source]
        source: Box<EditError>,
    },
}

impl EditError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Field path of the failure, for error reports.
    pub fn path(&self) -> String {
        match self {
            Self::Schema { path, .. } => path.clone(),
            Self::InOp { index, source } => {
                let inner = source.path();
                if inner.is_empty() {
                    format!("ops[{index}]")
                } else if inner.starts_with("ops[") {
                    inner
                } else {
                    format!("ops[{index}].{inner}")
                }
            }
            _ => String::new(),
        }
    }
}
