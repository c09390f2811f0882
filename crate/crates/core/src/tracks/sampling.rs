use std::collections::BTreeMap;

use rand::seq::index;

use super::{LabelMaps, TrackSet};
use crate::geometry::{project, CameraPath};
use crate::rng::Rng;

pub const DEFAULT_FOREGROUND_FRACTION: f64 = 0.7;

/// Draws `n` track indices, `ceil(foreground_fraction * n)` of them from
/// foreground tracks (object id > 0) when enough exist. Either pool tops up
/// the other when it runs short. Returned indices are ascending, so applying
/// them to both branches of a pair keeps the pairing.
pub fn sample_tracks(ts: &TrackSet, n: usize, foreground_fraction: f64, rng: &mut Rng) -> Vec<usize> {
    let total = ts.num_tracks();
    assert!(n >= 1 && n <= total, "sample size must be in 1..=N");
    if n == total {
        return (0..total).collect();
    }
    let (fg, bg): (Vec<usize>, Vec<usize>) = (0..total).partition(|&i| ts.object_id(i) > 0);
    let want_fg = ((foreground_fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    let take_fg = want_fg.min(fg.len()).max(n.saturating_sub(bg.len()));
    let take_bg = n - take_fg;
    let mut picked: Vec<usize> = index::sample(rng, fg.len(), take_fg).into_iter().map(|i| fg[i]).collect();
    picked.extend(index::sample(rng, bg.len(), take_bg).into_iter().map(|i| bg[i]));
    picked.sort_unstable();
    picked
}

/// Labels each track with the majority mask label over the frames where it
/// projects inside the frame. Ties go to the smaller label; tracks that never
/// land in frame get 0.
pub fn label_tracks_by_mask(ts: &TrackSet, masks: &LabelMaps, cam: &CameraPath) -> TrackSet {
    let mut out = ts.clone();
    for n in 0..ts.num_tracks() {
        let mut votes: BTreeMap<u8, usize> = BTreeMap::new();
        for f in 0..ts.num_frames().min(masks.frames) {
            let frame = cam.frame(f);
            let Ok(p) = project(ts.position(f, n), &frame.intrinsics, &frame.pose) else { continue };
            if !frame.intrinsics.contains(p.x, p.y) {
                continue;
            }
            let (r, c) = (p.y.floor() as usize, p.x.floor() as usize);
            if r < masks.height && c < masks.width {
                *votes.entry(masks.at(f, r, c)).or_default() += 1;
            }
        }
        // BTreeMap iterates labels ascending, so max_by_key keeps the last
        // maximum; reverse first so ties resolve to the smaller label.
        let label = votes.iter().rev().max_by_key(|(_, &v)| v).map(|(&l, _)| l).unwrap_or(0);
        out.set_object_id(n, label as u32);
    }
    out
}
