//! Preview warp: unproject a frame with its depth, move the points with the
//! edit, and z-buffer them into the edited camera. Holes stay black.

use nalgebra::Vector3;
use thiserror::Error;

use crate::edit::{edit_timeline, lbs_displacement, EditError, EditOp, EditSpec, EditState, ResolvedOp, Selection};
use crate::geometry::{project, unproject, CameraFrame};
use crate::tracks::{ClipPair, LabelMaps, TrackSet, VideoClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreviewError {
    #[error("preview needs per-frame depth maps")]
    MissingDepth,
    #[error("{0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Edit(#[from] EditError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColoredPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[f32; 3]>,
    pub labels: Vec<u32>,
}

impl ColoredPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, p: Vector3<f64>, color: [f32; 3], label: u32) {
        self.points.push(p);
        self.colors.push(color);
        self.labels.push(label);
    }
}

/// One point per pixel with positive depth, unprojected through the pixel
/// center. `image` is `H × W × 3`, `depth` and `labels` are `H × W`.
pub fn unproject_frame(image: &[f32], depth: &[f32], labels: Option<&[u8]>, camera: &CameraFrame) -> ColoredPointCloud {
    let (w, h) = (camera.intrinsics.width as usize, camera.intrinsics.height as usize);
    assert_eq!(image.len(), h * w * 3, "image size does not match the camera");
    assert_eq!(depth.len(), h * w, "depth size does not match the camera");
    let mut cloud = ColoredPointCloud::default();
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            let d = depth[k];
            if !(d > 0.0 && d.is_finite()) {
                continue;
            }
            let p = unproject(c as f64 + 0.5, r as f64 + 0.5, d as f64, &camera.intrinsics, &camera.pose).expect("depth checked positive");
            let label = labels.map_or(0, |l| l[k] as u32);
            cloud.push(p, [image[3 * k], image[3 * k + 1], image[3 * k + 2]], label);
        }
    }
    cloud
}

/// Rendered frame: `H × W × 3` colors, per-pixel winning depth (`inf` where
/// nothing landed) and coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    pub image: Vec<f32>,
    pub depth: Vec<f64>,
    pub coverage: Vec<bool>,
}

/// Single-pixel z-buffer splat. The nearest point wins; on equal depth the
/// lower point index wins.
pub fn splat_points(cloud: &ColoredPointCloud, camera: &CameraFrame) -> Splat {
    let (w, h) = (camera.intrinsics.width as usize, camera.intrinsics.height as usize);
    let mut out = Splat { image: vec![0.0; h * w * 3], depth: vec![f64::INFINITY; h * w], coverage: vec![false; h * w] };
    for (p, color) in cloud.points.iter().zip(&cloud.colors) {
        let Ok(proj) = project(p, &camera.intrinsics, &camera.pose) else { continue };
        if !camera.intrinsics.contains(proj.x, proj.y) {
            continue;
        }
        let k = proj.y.floor() as usize * w + proj.x.floor() as usize;
        if proj.depth < out.depth[k] {
            out.depth[k] = proj.depth;
            out.coverage[k] = true;
            out.image[3 * k..3 * k + 3].copy_from_slice(color);
        }
    }
    out
}

fn nearest_track(p: &Vector3<f64>, ts: &TrackSet, frame: usize, candidates: &[usize]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .min_by(|&a, &b| (ts.position(frame, a) - p).norm_squared().total_cmp(&(ts.position(frame, b) - p).norm_squared()))
}

fn cloud_op(cloud: &mut ColoredPointCloud, op: &EditOp, resolved: &ResolvedOp, before: &EditState, after: &EditState, frame: usize) {
    let tracks = &before.target_tracks;
    let f = frame.min(tracks.num_frames() - 1);
    match op {
        EditOp::Rigid { selection, keyframes, pivot } => {
            let t = keyframes.at(f);
            if t.is_identity() {
                return;
            }
            let anchor = keyframes.first_frame().min(tracks.num_frames() - 1);
            let pivot = pivot.unwrap_or_else(|| tracks.centroid(anchor, &resolved.indices));
            let all: Vec<usize> = (0..tracks.num_tracks()).collect();
            let moves = |k: usize, p: &Vector3<f64>| match selection {
                Selection::Object(id) => cloud.labels[k] == *id,
                _ => nearest_track(p, tracks, f, &all).is_some_and(|n| resolved.indices.contains(&n)),
            };
            let flags: Vec<bool> = cloud.points.iter().enumerate().map(|(k, p)| moves(k, p)).collect();
            for (p, m) in cloud.points.iter_mut().zip(flags) {
                if m {
                    *p = t.apply_about(p, &pivot);
                }
            }
        }
        EditOp::Lbs { handles, .. } => {
            let radius = resolved.radius.unwrap_or(0.0);
            let anchors: Vec<Vec<Vector3<f64>>> = handles
                .iter()
                .zip(&resolved.handles)
                .map(|((_, k), h)| {
                    let a = k.first_frame().min(tracks.num_frames() - 1);
                    h.indices.iter().map(|&i| *tracks.position(a, i)).collect()
                })
                .collect();
            let pivots: Vec<Vector3<f64>> = handles
                .iter()
                .zip(&resolved.handles)
                .map(|((_, k), h)| tracks.centroid(k.first_frame().min(tracks.num_frames() - 1), &h.indices))
                .collect();
            let transforms: Vec<_> = handles.iter().map(|(_, k)| k.at(f)).collect();
            let all: Vec<usize> = (0..tracks.num_tracks()).collect();
            for p in cloud.points.iter_mut() {
                let owner = nearest_track(p, tracks, f, &all).and_then(|n| resolved.handles.iter().position(|h| h.indices.contains(&n)));
                *p = match owner {
                    Some(h) => transforms[h].apply_about(p, &pivots[h]),
                    None => {
                        let rest = vec![*p; handles.len()];
                        *p + lbs_displacement(p, &rest, &anchors, &pivots, &transforms, radius).unwrap_or_else(Vector3::zeros)
                    }
                };
            }
        }
        EditOp::Camera(_) | EditOp::Drop { .. } | EditOp::FreezeBackground { .. } => {}
        EditOp::Remove { object_id } => {
            let keep: Vec<bool> = cloud.labels.iter().map(|l| l != object_id).collect();
            retain(cloud, &keep);
        }
        EditOp::Duplicate { object_id, keyframes } => {
            let t = keyframes.at(f);
            let object = tracks.tracks_with_object(*object_id);
            let anchor = keyframes.first_frame().min(tracks.num_frames() - 1);
            let pivot = tracks.centroid(anchor, &object);
            let fresh = resolved.new_object_id.expect("duplicate records its id");
            for k in 0..cloud.len() {
                if cloud.labels[k] == *object_id {
                    let p = t.apply_about(&cloud.points[k], &pivot);
                    let color = cloud.colors[k];
                    cloud.push(p, color, fresh);
                }
            }
        }
        EditOp::Transfer { object_id, .. } => {
            for k in 0..cloud.len() {
                if cloud.labels[k] != *object_id {
                    continue;
                }
                if let Some(n) = nearest_track(&cloud.points[k], tracks, f, &resolved.indices) {
                    cloud.points[k] += after.target_tracks.position(f, n) - tracks.position(f, n);
                }
            }
        }
    }
}

fn retain(cloud: &mut ColoredPointCloud, keep: &[bool]) {
    let mut out = ColoredPointCloud::default();
    for (k, _) in keep.iter().enumerate().filter(|(_, &kp)| kp) {
        out.push(cloud.points[k], cloud.colors[k], cloud.labels[k]);
    }
    *cloud = out;
}

fn apply_with_timeline(cloud: &ColoredPointCloud, spec: &EditSpec, frame: usize, states: &[EditState], trace: &[ResolvedOp]) -> ColoredPointCloud {
    let mut out = cloud.clone();
    for (i, op) in spec.ops.iter().enumerate() {
        cloud_op(&mut out, op, &trace[i], &states[i], &states[i + 1], frame);
    }
    out
}

/// Moves cloud points the way the spec moves tracks at `frame`. Object
/// selections act on point labels; box and index selections act on points
/// whose nearest track is selected. Background (label 0) points only move
/// under edits that select them explicitly.
pub fn apply_cloud_edit(cloud: &ColoredPointCloud, spec: &EditSpec, frame: usize, base: &EditState) -> Result<ColoredPointCloud, EditError> {
    if spec.is_identity() {
        return Ok(cloud.clone());
    }
    let (states, trace) = edit_timeline(base, spec)?;
    Ok(apply_with_timeline(cloud, spec, frame, &states, &trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preview {
    pub video: VideoClip,
    /// 1 where some point landed, per frame `H × W`.
    pub coverage: LabelMaps,
}

impl Preview {
    /// Coverage as 0/255 for PNG export.
    pub fn coverage_u8(&self, frame: usize) -> Vec<u8> {
        self.coverage.frame(frame).iter().map(|&c| if c > 0 { 255 } else { 0 }).collect()
    }
}

/// Renders every source frame through the edit into the edited target
/// camera.
pub fn render_preview(pair: &ClipPair, spec: &EditSpec) -> Result<Preview, PreviewError> {
    let depth = pair.depth.as_ref().ok_or(PreviewError::MissingDepth)?;
    let (nf, h, w) = (pair.num_frames(), pair.height(), pair.width());
    if depth.frames != nf || depth.height != h || depth.width != w {
        return Err(PreviewError::ShapeMismatch(format!("depth is {}x{}x{}, video {nf}x{h}x{w}", depth.frames, depth.height, depth.width)));
    }
    let base = EditState::from_pair(pair);
    let (states, trace) = edit_timeline(&base, spec)?;
    let camera = &states.last().expect("timeline is non-empty").target_camera;
    let mut video = VideoClip::zeros(nf, h, w);
    let mut coverage = LabelMaps { frames: nf, height: h, width: w, data: vec![0; nf * h * w] };
    for f in 0..nf {
        let labels = pair.masks.as_ref().map(|m| m.frame(f));
        let cloud = unproject_frame(pair.source_video.frame(f), depth.frame(f), labels, pair.source_camera.frame(f));
        let cloud = apply_with_timeline(&cloud, spec, f, &states, &trace);
        let splat = splat_points(&cloud, camera.frame(f));
        video.frame_mut(f).copy_from_slice(&splat.image);
        for (dst, &c) in coverage.data[f * h * w..(f + 1) * h * w].iter_mut().zip(&splat.coverage) {
            *dst = c as u8;
        }
    }
    Ok(Preview { video, coverage })
}
