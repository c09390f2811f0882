use super::ops::{
    apply_lbs_deform, apply_rigid_edit, default_lbs_radius, drop_tracks, duplicate_object, edit_camera_path, freeze_background, remove_object,
    select_tracks, transfer_tracks, LbsHandle,
};
use super::spec::{EditOp, EditSpec, Selection};
use super::EditError;
use crate::geometry::CameraPath;
use crate::tracks::{ClipPair, TrackSet};

/// Tracks and cameras an edit script operates on. Edits read the source
/// branch for box selections and write the target branch.
#[derive(Debug, Clone, PartialEq)]
pub struct EditState {
    pub source_tracks: TrackSet,
    pub target_tracks: TrackSet,
    pub source_camera: CameraPath,
    pub target_camera: CameraPath,
}

impl EditState {
    /// Starts from the source branch on both sides.
    pub fn from_source(tracks: TrackSet, camera: CameraPath) -> Self {
        Self {
            source_tracks: tracks.clone(),
            target_tracks: tracks,
            source_camera: camera.clone(),
            target_camera: camera,
        }
    }

    /// Edits are authored against the source, so the pair's own target is
    /// ignored.
    pub fn from_pair(pair: &ClipPair) -> Self {
        Self::from_source(pair.source_tracks.clone(), pair.source_camera.clone())
    }

    pub fn num_frames(&self) -> usize {
        self.source_tracks.num_frames()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedHandle {
    pub indices: Vec<usize>,
}

/// What one op touched, in indices of the state it was applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedOp {
    pub kind: &'static str,
    pub indices: Vec<usize>,
    pub handles: Vec<ResolvedHandle>,
    pub radius: Option<f64>,
    pub new_object_id: Option<u32>,
}

impl ResolvedOp {
    fn new(kind: &'static str, indices: Vec<usize>) -> Self {
        Self { kind, indices, handles: Vec::new(), radius: None, new_object_id: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOutcome {
    pub state: EditState,
    pub trace: Vec<ResolvedOp>,
}

fn check_keyframes(op: &EditOp, frames: usize) -> Result<(), EditError> {
    match op {
        EditOp::Rigid { keyframes, selection, .. } => {
            keyframes.check_frames(frames)?;
            check_selection(selection, frames)
        }
        EditOp::Lbs { handles, .. } => handles.iter().try_for_each(|(s, k)| {
            k.check_frames(frames)?;
            check_selection(s, frames)
        }),
        EditOp::Camera(c) => c.keyframes.check_frames(frames),
        EditOp::Duplicate { keyframes, .. } => keyframes.check_frames(frames),
        EditOp::Drop { selection } => check_selection(selection, frames),
        EditOp::FreezeBackground { anchor_frame } if *anchor_frame >= frames => Err(EditError::KeyframeOutOfRange { frame: *anchor_frame, frames }),
        _ => Ok(()),
    }
}

fn check_selection(sel: &Selection, frames: usize) -> Result<(), EditError> {
    match sel {
        Selection::Box(b) if b.frame >= frames => Err(EditError::KeyframeOutOfRange { frame: b.frame, frames }),
        _ => Ok(()),
    }
}

fn select(state: &EditState, sel: &Selection) -> Result<Vec<usize>, EditError> {
    select_tracks(&state.source_tracks, &state.source_camera, sel)
}

fn apply_op(state: &mut EditState, op: &EditOp) -> Result<ResolvedOp, EditError> {
    let kind = op.kind();
    Ok(match op {
        EditOp::Rigid { selection, keyframes, pivot } => {
            let idx = select(state, selection)?;
            if !keyframes.is_identity() {
                state.target_tracks = apply_rigid_edit(&state.target_tracks, &idx, keyframes, *pivot);
            }
            ResolvedOp::new(kind, idx)
        }
        EditOp::Lbs { handles, radius } => {
            let resolved: Vec<LbsHandle> = handles
                .iter()
                .map(|(s, k)| Ok(LbsHandle { indices: select(state, s)?, keyframes: k.clone() }))
                .collect::<Result<_, EditError>>()?;
            let radius = radius.unwrap_or_else(|| default_lbs_radius(&state.target_tracks, &resolved));
            state.target_tracks = apply_lbs_deform(&state.target_tracks, &resolved, Some(radius))?;
            ResolvedOp {
                handles: resolved.into_iter().map(|h| ResolvedHandle { indices: h.indices }).collect(),
                radius: Some(radius),
                ..ResolvedOp::new(kind, Vec::new())
            }
        }
        EditOp::Camera(edit) => {
            state.target_camera = edit_camera_path(&state.target_camera, edit)?;
            ResolvedOp::new(kind, Vec::new())
        }
        EditOp::Remove { object_id } => {
            let idx = state.target_tracks.tracks_with_object(*object_id);
            state.target_tracks = remove_object(&state.target_tracks, *object_id, &state.target_camera)?;
            ResolvedOp::new(kind, idx)
        }
        EditOp::Duplicate { object_id, keyframes } => {
            let (src, tgt, id) = duplicate_object(&state.source_tracks, &state.target_tracks, *object_id, keyframes)?;
            let idx = src.tracks_with_object(id);
            state.source_tracks = src;
            state.target_tracks = tgt;
            ResolvedOp { new_object_id: Some(id), ..ResolvedOp::new(kind, idx) }
        }
        EditOp::Transfer { object_id, positions } => {
            let idx = state.target_tracks.tracks_with_object(*object_id);
            state.target_tracks = transfer_tracks(&state.target_tracks, *object_id, positions)?;
            ResolvedOp::new(kind, idx)
        }
        EditOp::Drop { selection } => {
            let idx = match selection {
                Selection::Indices(i) => i.clone(),
                other => select(state, other)?,
            };
            let (src, tgt) = drop_tracks(&state.source_tracks, &state.target_tracks, &idx)?;
            state.source_tracks = src;
            state.target_tracks = tgt;
            ResolvedOp::new(kind, idx)
        }
        EditOp::FreezeBackground { anchor_frame } => {
            let idx = state.target_tracks.tracks_with_object(0);
            state.target_tracks = freeze_background(&state.target_tracks, *anchor_frame)?;
            ResolvedOp::new(kind, idx)
        }
    })
}

/// Applies every op in order, each seeing the previous result. Keyframe
/// ranges are checked for the whole spec before anything runs; errors carry
/// the failing op index.
pub fn apply_edit_spec(state: &EditState, spec: &EditSpec) -> Result<EditOutcome, EditError> {
    let (mut states, trace) = edit_timeline(state, spec)?;
    Ok(EditOutcome { state: states.pop().expect("timeline holds the input state"), trace })
}

/// Like [`apply_edit_spec`] but keeps every intermediate state: entry `i` is
/// the state op `i` saw, the last entry the final result.
pub fn edit_timeline(state: &EditState, spec: &EditSpec) -> Result<(Vec<EditState>, Vec<ResolvedOp>), EditError> {
    let frames = state.num_frames();
    let wrap = |index: usize| move |e: EditError| EditError::InOp { index, source: Box::new(e) };
    for (i, op) in spec.ops.iter().enumerate() {
        check_keyframes(op, frames).map_err(wrap(i))?;
    }
    let mut states = Vec::with_capacity(spec.ops.len() + 1);
    states.push(state.clone());
    let mut trace = Vec::with_capacity(spec.ops.len());
    for (i, op) in spec.ops.iter().enumerate() {
        let mut next = states[i].clone();
        trace.push(apply_op(&mut next, op).map_err(wrap(i))?);
        states.push(next);
    }
    Ok((states, trace))
}
