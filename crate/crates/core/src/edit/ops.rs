use std::collections::BTreeSet;

use nalgebra::Vector3;

use super::keyframes::Keyframes;
use super::spec::Selection;
use super::EditError;
use crate::geometry::{project, CameraPath, MIN_DEPTH};
use crate::tracks::TrackSet;

/// Added to inverse-distance LBS denominators, in meters.
pub const LBS_EPSILON: f64 = 1e-6;

/// Removed objects are pushed to at least this many frame widths.
pub const REMOVAL_OFFSET_WIDTHS: f64 = 2.0;

/// Resolves a selection against `ts` seen through `cam`. Box selections test
/// the projection at the box keyframe against `[min, max)`.
pub fn select_tracks(ts: &TrackSet, cam: &CameraPath, sel: &Selection) -> Result<Vec<usize>, EditError> {
    let indices: Vec<usize> = match sel {
        Selection::Object(id) => ts.tracks_with_object(*id),
        Selection::Indices(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= ts.num_tracks()) {
                return Err(EditError::InvalidSelection(format!("index {bad} out of range for {} tracks", ts.num_tracks())));
            }
            let set: BTreeSet<usize> = idx.iter().copied().collect();
            set.into_iter().collect()
        }
        Selection::Box(b) => {
            if b.frame >= ts.num_frames() {
                return Err(EditError::InvalidSelection(format!("box keyframe {} outside {} frames", b.frame, ts.num_frames())));
            }
            let (w, h) = (cam.width() as f64, cam.height() as f64);
            if b.min[0] < 0.0 || b.min[1] < 0.0 || b.max[0] > w || b.max[1] > h {
                return Err(EditError::InvalidSelection(format!("box {:?}-{:?} exceeds {w}x{h} frame", b.min, b.max)));
            }
            if b.max[0] <= b.min[0] || b.max[1] <= b.min[1] {
                return Err(EditError::EmptySelection);
            }
            let frame = cam.frame(b.frame);
            (0..ts.num_tracks())
                .filter(|&n| {
                    project(ts.position(b.frame, n), &frame.intrinsics, &frame.pose)
                        .map(|p| p.x >= b.min[0] && p.x < b.max[0] && p.y >= b.min[1] && p.y < b.max[1])
                        .unwrap_or(false)
                })
                .collect()
        }
    };
    if indices.is_empty() {
        return Err(EditError::EmptySelection);
    }
    Ok(indices)
}

/// Applies the keyframed transform about `pivot` (default: the selection's
/// centroid at the first keyframe) to the selected tracks.
pub fn apply_rigid_edit(ts: &TrackSet, indices: &[usize], keyframes: &Keyframes, pivot: Option<Vector3<f64>>) -> TrackSet {
    let mut out = ts.clone();
    let anchor = keyframes.first_frame().min(ts.num_frames() - 1);
    let pivot = pivot.unwrap_or_else(|| ts.centroid(anchor, indices));
    for f in 0..ts.num_frames() {
        let t = keyframes.at(f);
        if t.is_identity() {
            continue;
        }
        for &i in indices {
            *out.position_mut(f, i) = t.apply_about(ts.position(f, i), &pivot);
        }
    }
    out
}

/// One LBS handle: tracks that follow `keyframes` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LbsHandle {
    pub indices: Vec<usize>,
    pub keyframes: Keyframes,
}

/// Twice the radius of the bounding sphere (centroid-centered) of all handle
/// points at their anchor frames.
pub fn default_lbs_radius(ts: &TrackSet, handles: &[LbsHandle]) -> f64 {
    let pts: Vec<Vector3<f64>> = handles
        .iter()
        .flat_map(|h| {
            let a = h.keyframes.first_frame().min(ts.num_frames() - 1);
            h.indices.iter().map(move |&i| *ts.position(a, i))
        })
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    let c: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    2.0 * pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// Normalized inverse-distance weights of `rest` (a point at each handle's
/// anchor frame) against each handle's anchor-frame points. All zero when no
/// handle is within `radius`.
fn lbs_weights(rest: &[Vector3<f64>], anchors: &[Vec<Vector3<f64>>], radius: f64) -> Vec<f64> {
    let mut w: Vec<f64> = anchors
        .iter()
        .zip(rest)
        .map(|(pts, p)| {
            let d = pts.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            if d <= radius {
                1.0 / (d + LBS_EPSILON)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Blended displacement of a point under handle transforms at one frame.
/// `rest` holds the point's position at each handle's anchor frame, `current`
/// its position at the frame being deformed.
pub fn lbs_displacement(
    current: &Vector3<f64>,
    rest: &[Vector3<f64>],
    anchors: &[Vec<Vector3<f64>>],
    pivots: &[Vector3<f64>],
    transforms: &[crate::geometry::SimilarityTransform],
    radius: f64,
) -> Option<Vector3<f64>> {
    let w = lbs_weights(rest, anchors, radius);
    if w.iter().all(|&x| x == 0.0) {
        return None;
    }
    let mut disp = Vector3::zeros();
    for ((wh, t), pivot) in w.iter().zip(transforms).zip(pivots) {
        if *wh != 0.0 {
            disp += (t.apply_about(current, pivot) - current) * *wh;
        }
    }
    Some(disp)
}

/// Linear-blend-skinning style deformation: handle tracks follow their
/// transform exactly, other tracks within `radius` of a handle move by the
/// inverse-distance blend of handle displacements.
pub fn apply_lbs_deform(ts: &TrackSet, handles: &[LbsHandle], radius: Option<f64>) -> Result<TrackSet, EditError> {
    let mut owner: Vec<Option<usize>> = vec![None; ts.num_tracks()];
    for (h, handle) in handles.iter().enumerate() {
        for &i in &handle.indices {
            if owner[i].replace(h).is_some() {
                return Err(EditError::OverlappingHandles);
            }
        }
    }
    let radius = radius.unwrap_or_else(|| default_lbs_radius(ts, handles));
    let last = ts.num_frames() - 1;
    let anchor_frames: Vec<usize> = handles.iter().map(|h| h.keyframes.first_frame().min(last)).collect();
    let anchors: Vec<Vec<Vector3<f64>>> =
        handles.iter().zip(&anchor_frames).map(|(h, &a)| h.indices.iter().map(|&i| *ts.position(a, i)).collect()).collect();
    let pivots: Vec<Vector3<f64>> = handles.iter().zip(&anchor_frames).map(|(h, &a)| ts.centroid(a, &h.indices)).collect();

    let mut out = ts.clone();
    for f in 0..ts.num_frames() {
        let transforms: Vec<_> = handles.iter().map(|h| h.keyframes.at(f)).collect();
        if transforms.iter().all(|t| t.is_identity()) {
            continue;
        }
        for n in 0..ts.num_tracks() {
            let p = ts.position(f, n);
            match owner[n] {
                Some(h) => {
                    if !transforms[h].is_identity() {
                        *out.position_mut(f, n) = transforms[h].apply_about(p, &pivots[h]);
                    }
                }
                None => {
                    let rest: Vec<Vector3<f64>> = anchor_frames.iter().map(|&a| *ts.position(a, n)).collect();
                    if let Some(d) = lbs_displacement(p, &rest, &anchors, &pivots, &transforms, radius) {
                        *out.position_mut(f, n) = p + d;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraEditMode {
    /// Keyframes are world-space offsets applied to the source cameras.
    Relative,
    /// Keyframes are camera-to-world poses replacing the source cameras.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntrinsicsOverride {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraEdit {
    pub mode: CameraEditMode,
    pub keyframes: Keyframes,
    pub intrinsics: Option<IntrinsicsOverride>,
}

/// Relative mode moves each camera by the interpolated offset `O` (camera
/// center `c ↦ O(c)`), i.e. `pose ∘ O⁻¹`; absolute mode uses `O⁻¹` directly.
pub fn edit_camera_path(cam: &CameraPath, edit: &CameraEdit) -> Result<CameraPath, EditError> {
    let mut frames = cam.frames().to_vec();
    for (f, frame) in frames.iter_mut().enumerate() {
        let offset = edit.keyframes.at(f);
        match edit.mode {
            CameraEditMode::Relative => {
                if !offset.is_identity() {
                    frame.pose = frame.pose.compose(&offset.to_rigid()?.inverse());
                }
            }
            CameraEditMode::Absolute => frame.pose = offset.to_rigid()?.inverse(),
        }
        if let Some(o) = &edit.intrinsics {
            let i = &mut frame.intrinsics;
            i.fx = o.fx.unwrap_or(i.fx);
            i.fy = o.fy.unwrap_or(i.fy);
            i.cx = o.cx.unwrap_or(i.cx);
            i.cy = o.cy.unwrap_or(i.cy);
        }
    }
    Ok(CameraPath::new(frames)?)
}

/// Clears existence of the object's tracks and slides them along the camera's
/// right axis, at their original depth, until they project at
/// `x ≥ 2 · width + 1` on every frame. Points behind the camera are first
/// brought to depth 1.
pub fn remove_object(ts: &TrackSet, object_id: u32, cam: &CameraPath) -> Result<TrackSet, EditError> {
    let indices = ts.tracks_with_object(object_id);
    if indices.is_empty() {
        return Err(EditError::UnknownObject(object_id));
    }
    let mut out = ts.clone();
    for f in 0..ts.num_frames() {
        let frame = cam.frame(f);
        let intr = &frame.intrinsics;
        let target_x = REMOVAL_OFFSET_WIDTHS * intr.width as f64 + 1.0;
        for &i in &indices {
            let mut pc = frame.pose.transform_point(ts.position(f, i));
            if pc.z <= MIN_DEPTH {
                pc.z = 1.0;
            }
            pc.x = pc.x.max((target_x - intr.cx) * pc.z / intr.fx);
            *out.position_mut(f, i) = frame.pose.rotation.transpose() * (pc - frame.pose.translation);
            out.set_exists(f, i, false);
        }
    }
    Ok(out)
}

/// Appends a copy of an object to both branches: source tracks verbatim,
/// target tracks under `keyframes` about their first-keyframe centroid. The
/// copies get object id `max + 1`, which is returned alongside.
pub fn duplicate_object(source: &TrackSet, target: &TrackSet, object_id: u32, keyframes: &Keyframes) -> Result<(TrackSet, TrackSet, u32), EditError> {
    let indices = source.tracks_with_object(object_id);
    if indices.is_empty() {
        return Err(EditError::UnknownObject(object_id));
    }
    let fresh = source.object_ids().iter().chain(target.object_ids()).copied().max().unwrap_or(0) + 1;
    let mut src_copy = source.subset(&indices).expect("indices in range");
    let moved = apply_rigid_edit(target, &indices, keyframes, None);
    let mut tgt_copy = moved.subset(&indices).expect("indices in range");
    for k in 0..indices.len() {
        src_copy.set_object_id(k, fresh);
        tgt_copy.set_object_id(k, fresh);
    }
    Ok((
        source.append(&src_copy).expect("same frame count"),
        target.append(&tgt_copy).expect("same frame count"),
        fresh,
    ))
}

/// Replaces the object's target positions with externally supplied tracks
/// (`F × M`, M = the object's track count).
pub fn transfer_tracks(target: &TrackSet, object_id: u32, replacement: &[Vec<[f64; 3]>]) -> Result<TrackSet, EditError> {
    let indices = target.tracks_with_object(object_id);
    if indices.is_empty() {
        return Err(EditError::UnknownObject(object_id));
    }
    if replacement.len() != target.num_frames() {
        return Err(EditError::CountMismatch {
            expected: target.num_frames(),
            found: replacement.len(),
        });
    }
    if let Some(row) = replacement.iter().find(|r| r.len() != indices.len()) {
        return Err(EditError::CountMismatch {
            expected: indices.len(),
            found: row.len(),
        });
    }
    let mut out = target.clone();
    for (f, row) in replacement.iter().enumerate() {
        for (&i, p) in indices.iter().zip(row) {
            *out.position_mut(f, i) = Vector3::from(*p);
        }
    }
    Ok(out)
}

/// Deletes tracks from both branches, keeping the order of the rest.
pub fn drop_tracks(source: &TrackSet, target: &TrackSet, indices: &[usize]) -> Result<(TrackSet, TrackSet), EditError> {
    let n = source.num_tracks();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(EditError::InvalidSelection(format!("index {bad} out of range for {n} tracks")));
    }
    let dropped: BTreeSet<usize> = indices.iter().copied().collect();
    let keep: Vec<usize> = (0..n).filter(|i| !dropped.contains(i)).collect();
    if keep.is_empty() {
        return Err(EditError::WouldBeEmpty);
    }
    if keep.len() == n {
        return Ok((source.clone(), target.clone()));
    }
    Ok((source.subset(&keep).expect("in range"), target.subset(&keep).expect("in range")))
}

/// Pins every background track (object id 0) to its anchor-frame position.
pub fn freeze_background(ts: &TrackSet, anchor_frame: usize) -> Result<TrackSet, EditError> {
    if anchor_frame >= ts.num_frames() {
        return Err(EditError::KeyframeOutOfRange {
            frame: anchor_frame,
            frames: ts.num_frames(),
        });
    }
    let mut out = ts.clone();
    for n in ts.tracks_with_object(0) {
        let anchor = *ts.position(anchor_frame, n);
        for f in 0..ts.num_frames() {
            *out.position_mut(f, n) = anchor;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::BoxSelection;
    use crate::geometry::{CameraFrame, CameraIntrinsics, RigidPose, SimilarityTransform};
    use nalgebra::UnitQuaternion;

    fn camera(frames: usize) -> CameraPath {
        let intr = CameraIntrinsics::new(32.0, 32.0, 16.0, 16.0, 32, 32).unwrap();
        CameraPath::constant(CameraFrame { intrinsics: intr, pose: RigidPose::identity() }, frames).unwrap()
    }

    /// Two objects of 3 tracks each plus 2 background tracks, drifting in x.
    fn fixture() -> TrackSet {
        let (nf, nt) = (4, 8);
        let ids = [1, 1, 1, 2, 2, 2, 0, 0];
        let mut positions = Vec::new();
        for f in 0..nf {
            for n in 0..nt {
                positions.push(Vector3::new(-0.6 + 0.15 * n as f64 + 0.01 * f as f64, 0.05 * (n % 3) as f64, 2.0 + 0.1 * n as f64));
            }
        }
        let mut ts = TrackSet::from_positions(nf, nt, positions).unwrap();
        for (i, id) in ids.iter().enumerate() {
            ts.set_object_id(i, *id);
        }
        ts
    }

    fn translation(x: f64, y: f64, z: f64) -> Keyframes {
        Keyframes::constant(SimilarityTransform::from_translation(Vector3::new(x, y, z)))
    }

    #[test]
    fn box_selection() {
        let ts = fixture();
        let cam = camera(4);
        let all = select_tracks(&ts, &cam, &Selection::Box(BoxSelection { frame: 0, min: [0.0, 0.0], max: [32.0, 32.0] })).unwrap();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        let zero = Selection::Box(BoxSelection { frame: 0, min: [4.0, 4.0], max: [4.0, 9.0] });
        assert_eq!(select_tracks(&ts, &cam, &zero), Err(EditError::EmptySelection));
        let outside = Selection::Box(BoxSelection { frame: 0, min: [0.0, 0.0], max: [40.0, 9.0] });
        assert!(matches!(select_tracks(&ts, &cam, &outside), Err(EditError::InvalidSelection(_))));
        assert_eq!(select_tracks(&ts, &cam, &Selection::Object(2)).unwrap(), vec![3, 4, 5]);
        assert_eq!(select_tracks(&ts, &cam, &Selection::Object(9)), Err(EditError::EmptySelection));
    }

    #[test]
    fn identity_and_translation_rigid() {
        let ts = fixture();
        assert_eq!(apply_rigid_edit(&ts, &[0, 1, 2], &Keyframes::constant(SimilarityTransform::identity()), None), ts);
        let moved = apply_rigid_edit(&ts, &[0, 1, 2], &translation(1.0, 0.0, 0.0), None);
        for f in 0..4 {
            for n in 0..8 {
                let expect = if n < 3 { ts.position(f, n) + Vector3::new(1.0, 0.0, 0.0) } else { *ts.position(f, n) };
                assert_eq!(*moved.position(f, n), expect);
            }
        }
    }

    #[test]
    fn yaw_about_centroid_is_isometry() {
        let ts = fixture();
        let idx = [0, 1, 2, 3];
        let yaw = Keyframes::constant(SimilarityTransform {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI),
            ..SimilarityTransform::identity()
        });
        let out = apply_rigid_edit(&ts, &idx, &yaw, None);
        let c0 = ts.centroid(0, &idx);
        assert!((out.centroid(0, &idx) - c0).norm() < 1e-9);
        for f in 0..4 {
            for &a in &idx {
                let before = (ts.position(f, a) - c0).norm();
                let after = (out.position(f, a) - c0).norm();
                assert!((before - after).abs() < 1e-9);
                for &b in &idx {
                    let d0 = (ts.position(f, a) - ts.position(f, b)).norm();
                    let d1 = (out.position(f, a) - out.position(f, b)).norm();
                    assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
                }
            }
        }
        assert_eq!(out.position(2, 7), ts.position(2, 7));
    }

    #[test]
    fn lbs_single_handle_matches_rigid() {
        let ts = fixture();
        let all: Vec<usize> = (0..8).collect();
        let k = Keyframes::new(vec![
            (0, SimilarityTransform::identity()),
            (3, SimilarityTransform::from_parts(1.2, [0.9, 0.0, 0.3, 0.0], [0.1, 0.2, 0.0]).unwrap()),
        ])
        .unwrap();
        let lbs = apply_lbs_deform(&ts, &[LbsHandle { indices: all.clone(), keyframes: k.clone() }], None).unwrap();
        assert_eq!(lbs, apply_rigid_edit(&ts, &all, &k, None));
    }

    #[test]
    fn lbs_outside_radius_is_untouched() {
        let ts = fixture();
        let handles = [LbsHandle { indices: vec![0], keyframes: translation(0.0, 1.0, 0.0) }];
        let out = apply_lbs_deform(&ts, &handles, Some(0.05)).unwrap();
        for n in 1..8 {
            for f in 0..4 {
                assert_eq!(out.position(f, n), ts.position(f, n));
            }
        }
        assert_eq!(*out.position(1, 0), ts.position(1, 0) + Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn lbs_opposite_handles_cancel_at_midpoint() {
        let positions = vec![Vector3::new(-1.0, 0.0, 2.0), Vector3::new(1.0, 0.0, 2.0), Vector3::new(0.0, 0.3, 2.0)];
        let ts = TrackSet::from_positions(1, 3, positions).unwrap();
        let handles = [
            LbsHandle { indices: vec![0], keyframes: translation(1.0, 0.0, 0.0) },
            LbsHandle { indices: vec![1], keyframes: translation(-1.0, 0.0, 0.0) },
        ];
        let out = apply_lbs_deform(&ts, &handles, Some(10.0)).unwrap();
        assert!((out.position(0, 2) - ts.position(0, 2)).norm() < 1e-9);
        let overlapping = [handles[0].clone(), LbsHandle { indices: vec![0, 1], keyframes: translation(0.0, 0.0, 0.0) }];
        assert_eq!(apply_lbs_deform(&ts, &overlapping, None), Err(EditError::OverlappingHandles));
    }

    #[test]
    fn camera_offsets() {
        let cam = camera(3);
        let zero = CameraEdit { mode: CameraEditMode::Relative, keyframes: translation(0.0, 0.0, 0.0), intrinsics: None };
        assert_eq!(edit_camera_path(&cam, &zero).unwrap(), cam);
        let shift = CameraEdit { mode: CameraEditMode::Relative, keyframes: translation(0.5, -0.2, 0.1), intrinsics: None };
        let moved = edit_camera_path(&cam, &shift).unwrap();
        for f in 0..3 {
            let d = moved.frame(f).pose.center() - cam.frame(f).pose.center();
            assert!((d - Vector3::new(0.5, -0.2, 0.1)).norm() < 1e-12);
        }
    }

    #[test]
    fn removal_goes_off_screen() {
        let ts = fixture();
        let cam = camera(4);
        let out = remove_object(&ts, 1, &cam).unwrap();
        for f in 0..4 {
            for n in 0..3 {
                let fr = cam.frame(f);
                let p = project(out.position(f, n), &fr.intrinsics, &fr.pose).unwrap();
                assert!(p.x / 32.0 >= 2.0);
                assert!(!out.exists(f, n));
                let before = project(ts.position(f, n), &fr.intrinsics, &fr.pose).unwrap();
                assert!((p.depth - before.depth).abs() < 1e-12);
            }
            for n in 3..8 {
                assert_eq!(out.position(f, n), ts.position(f, n));
                assert!(out.exists(f, n));
            }
        }
        assert_eq!(remove_object(&ts, 7, &cam), Err(EditError::UnknownObject(7)));
    }

    #[test]
    fn duplication_appends_paired_tracks() {
        let ts = fixture();
        let (src, tgt, id) = duplicate_object(&ts, &ts, 2, &translation(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(id, 3);
        assert_eq!(src.num_tracks(), 11);
        assert_eq!(tgt.num_tracks(), 11);
        for f in 0..4 {
            for k in 0..3 {
                assert_eq!(tgt.position(f, 8 + k), ts.position(f, 3 + k));
                assert_eq!(src.position(f, 8 + k), ts.position(f, 3 + k));
            }
        }
        assert_eq!(src.tracks_with_object(3), vec![8, 9, 10]);
    }

    #[test]
    fn transfer_equivalent_to_translation() {
        let ts = fixture();
        let idx = ts.tracks_with_object(1);
        let repl: Vec<Vec<[f64; 3]>> = (0..4)
            .map(|f| idx.iter().map(|&i| { let p = ts.position(f, i); [p.x, p.y + 1.0, p.z] }).collect())
            .collect();
        let out = transfer_tracks(&ts, 1, &repl).unwrap();
        assert_eq!(out, apply_rigid_edit(&ts, &idx, &translation(0.0, 1.0, 0.0), None));
        assert!(matches!(transfer_tracks(&ts, 1, &repl[..2]), Err(EditError::CountMismatch { .. })));
    }

    #[test]
    fn drop_bookkeeping() {
        let ts = fixture();
        assert_eq!(drop_tracks(&ts, &ts, &[]).unwrap(), (ts.clone(), ts.clone()));
        let (s, t) = drop_tracks(&ts, &ts, &[0, 4]).unwrap();
        assert_eq!(s.num_tracks(), 6);
        assert_eq!(t.tracks_with_object(2), vec![2, 3]);
        assert_eq!(drop_tracks(&ts, &ts, &(0..8).collect::<Vec<_>>()), Err(EditError::WouldBeEmpty));
    }

    #[test]
    fn freeze_background_pins_positions() {
        let ts = fixture();
        let out = freeze_background(&ts, 1).unwrap();
        for f in 0..4 {
            assert_eq!(out.position(f, 6), ts.position(1, 6));
            assert_eq!(out.position(f, 0), ts.position(f, 0));
        }
    }
}
