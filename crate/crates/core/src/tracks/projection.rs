use super::{ClipPair, ProjectedTracks, TrackSet};
use crate::geometry::{project, CameraPath, DisparityRange};

/// Off-screen placeholder for tracks that are never in front of the camera.
const NEVER_VISIBLE: [f64; 3] = [-1.0, -1.0, 0.0];

fn camera_depths<'a>(tracks: &'a TrackSet, cam: &'a CameraPath) -> impl Iterator<Item = f64> + 'a {
    (0..tracks.num_frames()).flat_map(move |f| {
        let frame = cam.frame(f);
        (0..tracks.num_tracks()).filter_map(move |n| project(tracks.position(f, n), &frame.intrinsics, &frame.pose).ok().map(|p| p.depth))
    })
}

/// Disparity range over the in-front depths of both branches of a pair.
pub fn pair_depth_range(source: &TrackSet, source_cam: &CameraPath, target: &TrackSet, target_cam: &CameraPath) -> DisparityRange {
    DisparityRange::from_depths(camera_depths(source, source_cam).chain(camera_depths(target, target_cam)))
}

/// Projects every track with its frame's camera. Points behind the camera lose
/// existence and reuse the nearest earlier valid coordinate (or the first
/// later one when no earlier frame is valid).
pub fn project_tracks(tracks: &TrackSet, cam: &CameraPath, range: &DisparityRange) -> ProjectedTracks {
    assert_eq!(tracks.num_frames(), cam.len(), "track and camera frame counts differ");
    let (nf, nt) = (tracks.num_frames(), tracks.num_tracks());
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let mut coords: Vec<Option<[f64; 3]>> = Vec::with_capacity(nf * nt);
    for f in 0..nf {
        let frame = cam.frame(f);
        for n in 0..nt {
            coords.push(
                project(tracks.position(f, n), &frame.intrinsics, &frame.pose)
                    .ok()
                    .map(|p| [p.x / w, p.y / h, range.normalize(p.depth)]),
            );
        }
    }
    let existence: Vec<bool> = (0..nf * nt).map(|k| tracks.existence()[k] && coords[k].is_some()).collect();
    let mut filled = vec![NEVER_VISIBLE; nf * nt];
    for n in 0..nt {
        let first_valid = (0..nf).find_map(|f| coords[f * nt + n]);
        let mut last = first_valid.unwrap_or(NEVER_VISIBLE);
        for f in 0..nf {
            if let Some(c) = coords[f * nt + n] {
                last = c;
            }
            filled[f * nt + n] = last;
        }
    }
    ProjectedTracks::new(nf, nt, filled, existence).expect("shapes are consistent by construction")
}

/// Projects both branches with a shared disparity range.
pub fn project_pair(pair: &ClipPair) -> (ProjectedTracks, ProjectedTracks) {
    let range = pair_depth_range(&pair.source_tracks, &pair.source_camera, &pair.target_tracks, &pair.target_camera);
    (
        project_tracks(&pair.source_tracks, &pair.source_camera, &range),
        project_tracks(&pair.target_tracks, &pair.target_camera, &range),
    )
}

/// Source frame used for each of `f` token frames when subsampling `total` frames.
pub fn downsample_indices(total: usize, f: usize) -> Vec<usize> {
    assert!(f >= 1 && f <= total, "token frames must be in 1..=frames");
    if f == 1 {
        return vec![0];
    }
    (0..f).map(|k| (k as f64 * (total - 1) as f64 / (f - 1) as f64).round() as usize).collect()
}

/// Nearest-neighbor temporal subsampling to `f` frames; values are copied.
pub fn temporal_downsample(pt: &ProjectedTracks, f: usize) -> ProjectedTracks {
    let n = pt.num_tracks();
    let idx = downsample_indices(pt.num_frames(), f);
    let mut coords = Vec::with_capacity(f * n);
    let mut existence = Vec::with_capacity(f * n);
    for &src in &idx {
        coords.extend_from_slice(&pt.coords()[src * n..(src + 1) * n]);
        existence.extend_from_slice(&pt.existence()[src * n..(src + 1) * n]);
    }
    ProjectedTracks::new(f, n, coords, existence).expect("shapes are consistent by construction")
}
