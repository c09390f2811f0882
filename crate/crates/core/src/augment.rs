//! Seeded training-time perturbations of tracks and clips.
//!
//! Each op takes its own RNG; [`augment_pair`] derives one stream per op from
//! the config seed so ops never share random draws.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fit_homography, CameraPath, GeometryError, Homography};
use crate::rng::{derive, Rng};
use crate::tracks::{pair_depth_range, project_tracks, ClipPair, ProjectedTracks, TrackSet, VideoClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error("homography perturbation needs at least {needed} tracks in its subset, cap allows {available}")]
    TooFewTracks { needed: usize, available: usize },
    #[error("video of {found} frames is too short, need {needed}")]
    VideoTooShort { needed: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub epipolar_fraction: f64,
    /// Half-width of the multiplicative depth factor range.
    pub epipolar_sigma: f64,
    pub homography_fraction: f64,
    pub homography_jitter_px: f64,
    pub drift_fraction: f64,
    /// Radius of the velocity disk, px per frame.
    pub drift_velocity_px: f64,
    pub dropout_max: f64,
    pub overlap_pair_fraction: f64,
    pub overlap_max: f64,
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            epipolar_fraction: 0.1,
            epipolar_sigma: 0.05,
            homography_fraction: 0.1,
            homography_jitter_px: 3.0,
            drift_fraction: 0.1,
            drift_velocity_px: 2.0,
            dropout_max: 0.5,
            overlap_pair_fraction: 0.05,
            overlap_max: 0.5,
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every perturbation off; `augment_pair` is then an exact identity apart
    /// from projection.
    pub fn disabled() -> Self {
        Self {
            epipolar_sigma: 0.0,
            homography_jitter_px: 0.0,
            drift_velocity_px: 0.0,
            dropout_max: 0.0,
            flip_prob: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let fractions = [
            ("epipolar_fraction", self.epipolar_fraction),
            ("homography_fraction", self.homography_fraction),
            ("drift_fraction", self.drift_fraction),
            ("dropout_max", self.dropout_max),
            ("overlap_pair_fraction", self.overlap_pair_fraction),
            ("overlap_max", self.overlap_max),
            ("flip_prob", self.flip_prob),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(AugmentError::InvalidConfig(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        let magnitudes = [
            ("epipolar_sigma", self.epipolar_sigma),
            ("homography_jitter_px", self.homography_jitter_px),
            ("drift_velocity_px", self.drift_velocity_px),
        ];
        for (name, v) in magnitudes {
            if !(v.is_finite() && v >= 0.0) {
                return Err(AugmentError::InvalidConfig(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.epipolar_sigma >= 1.0 {
            return Err(AugmentError::InvalidConfig("epipolar_sigma must be below 1 to keep depths positive".into()));
        }
        Ok(())
    }
}

/// Largest subset size a fraction cap allows.
pub fn subset_cap(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).floor() as usize
}

/// Uniform subset size in `[min, cap]`, then a uniform subset of that size.
fn draw_subset(n: usize, min: usize, cap: usize, rng: &mut Rng) -> Vec<usize> {
    let k = rng.random_range(min..=cap);
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpipolarRecord {
    pub indices: Vec<usize>,
    /// Depth factors, frame-major over `indices`.
    pub factors: Vec<f64>,
}

/// Scales the source-camera depth of a seeded subset of target points by a
/// factor in `[1 - sigma, 1 + sigma]`, per point and frame. The source
/// projection of every point is unchanged.
pub fn epipolar_jitter(target: &TrackSet, source_camera: &CameraPath, cfg: &AugmentConfig, rng: &mut Rng) -> (TrackSet, EpipolarRecord) {
    let n = target.num_tracks();
    let indices = draw_subset(n, 0, subset_cap(cfg.epipolar_fraction, n), rng);
    let mut out = target.clone();
    let mut factors = Vec::with_capacity(indices.len() * target.num_frames());
    for f in 0..target.num_frames() {
        let pose = &source_camera.frame(f).pose;
        for &i in &indices {
            let s = if cfg.epipolar_sigma > 0.0 {
                rng.random_range(1.0 - cfg.epipolar_sigma..=1.0 + cfg.epipolar_sigma)
            } else {
                1.0
            };
            factors.push(s);
            if s != 1.0 {
                let pc = pose.transform_point(target.position(f, i)) * s;
                *out.position_mut(f, i) = pose.rotation.transpose() * (pc - pose.translation);
            }
        }
    }
    (out, EpipolarRecord { indices, factors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyRecord {
    pub indices: Vec<usize>,
    pub anchor_frame: usize,
    /// The four subset tracks whose anchor positions define each homography.
    pub defining: [usize; 4],
    /// Per frame: `(anchor xy, jittered xy)` for the defining tracks, in
    /// normalized coordinates. Empty on the anchor frame.
    pub correspondences: Vec<Vec<([f64; 2], [f64; 2])>>,
    /// Row-major 3×3 per frame; `None` on the anchor frame or when the
    /// anchor points were degenerate.
    pub homographies: Vec<Option<[f64; 9]>>,
}

/// Warps a seeded subset of tracks on every non-anchor frame with a
/// homography fit from four jittered anchor-frame positions. Coordinates are
/// normalized; `width`/`height` convert the pixel jitter.
pub fn homography_perturb(
    pt: &ProjectedTracks,
    width: usize,
    height: usize,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<(ProjectedTracks, HomographyRecord), AugmentError> {
    let n = pt.num_tracks();
    let cap = subset_cap(cfg.homography_fraction, n);
    if cap < 4 {
        return Err(AugmentError::TooFewTracks { needed: 4, available: cap });
    }
    let indices = draw_subset(n, 4, cap, rng);
    let anchor_frame = rng.random_range(0..pt.num_frames());
    let pick = index::sample(rng, indices.len(), 4);
    let defining = [indices[pick.index(0)], indices[pick.index(1)], indices[pick.index(2)], indices[pick.index(3)]];
    let (jx, jy) = (cfg.homography_jitter_px / width as f64, cfg.homography_jitter_px / height as f64);

    let mut out = pt.clone();
    let mut correspondences = Vec::with_capacity(pt.num_frames());
    let mut homographies = Vec::with_capacity(pt.num_frames());
    for f in 0..pt.num_frames() {
        if f == anchor_frame {
            correspondences.push(Vec::new());
            homographies.push(None);
            continue;
        }
        let corr: [([f64; 2], [f64; 2]); 4] = std::array::from_fn(|k| {
            let c = pt.coord(anchor_frame, defining[k]);
            let dx = if jx > 0.0 { rng.random_range(-jx..=jx) } else { 0.0 };
            let dy = if jy > 0.0 { rng.random_range(-jy..=jy) } else { 0.0 };
            ([c[0], c[1]], [c[0] + dx, c[1] + dy])
        });
        correspondences.push(corr.to_vec());
        if jx == 0.0 && jy == 0.0 {
            homographies.push(Some(homography_row_major(&Homography::identity())));
            continue;
        }
        let h = match fit_homography(&corr) {
            Ok(h) => h,
            Err(GeometryError::DegenerateConfiguration(_)) => {
                homographies.push(None);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for &i in &indices {
            let c = out.coord_mut(f, i);
            let [x, y] = h.apply([c[0], c[1]]);
            c[0] = x;
            c[1] = y;
        }
        homographies.push(Some(homography_row_major(&h)));
    }
    Ok((out, HomographyRecord { indices, anchor_frame, defining, correspondences, homographies }))
}

fn homography_row_major(h: &Homography) -> [f64; 9] {
    std::array::from_fn(|k| h.matrix[(k / 3, k % 3)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub indices: Vec<usize>,
    /// Velocities in px per frame.
    pub velocities: Vec<[f64; 2]>,
}

/// Adds `k · v` to frame `k` of a seeded subset of tracks, with one velocity
/// per track drawn uniformly from the disk of radius `drift_velocity_px`.
pub fn linear_drift(pt: &ProjectedTracks, width: usize, height: usize, cfg: &AugmentConfig, rng: &mut Rng) -> (ProjectedTracks, DriftRecord) {
    let n = pt.num_tracks();
    let indices = draw_subset(n, 0, subset_cap(cfg.drift_fraction, n), rng);
    let velocities: Vec<[f64; 2]> = indices
        .iter()
        .map(|_| {
            let r = cfg.drift_velocity_px * rng.random::<f64>().sqrt();
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            [r * theta.cos(), r * theta.sin()]
        })
        .collect();
    let mut out = pt.clone();
    if cfg.drift_velocity_px > 0.0 {
        apply_drift(&mut out, &indices, &velocities, width, height);
    }
    (out, DriftRecord { indices, velocities })
}

/// Shifts frame `k` of each listed track by `k · v` pixels.
pub fn apply_drift(pt: &mut ProjectedTracks, indices: &[usize], velocities: &[[f64; 2]], width: usize, height: usize) {
    for f in 1..pt.num_frames() {
        let k = f as f64;
        for (&i, v) in indices.iter().zip(velocities) {
            let c = pt.coord_mut(f, i);
            c[0] += k * v[0] / width as f64;
            c[1] += k * v[1] / height as f64;
        }
    }
}

/// Zeroes a seeded subset of at most `dropout_max · F` frames; returns the
/// dropped frame indices, ascending.
pub fn frame_dropout(video: &VideoClip, cfg: &AugmentConfig, rng: &mut Rng) -> (VideoClip, Vec<usize>) {
    let dropped = draw_subset(video.frames, 0, subset_cap(cfg.dropout_max, video.frames), rng);
    let mut out = video.clone();
    for &f in &dropped {
        out.frame_mut(f).fill(0.0);
    }
    (out, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipPolicy {
    /// Frames per clip.
    pub frames: usize,
    pub fps: f64,
    pub min_gap_s: f64,
    pub max_gap_s: f64,
}

impl ClipPolicy {
    pub fn new(frames: usize, fps: f64) -> Self {
        Self { frames, fps, min_gap_s: 1.0, max_gap_s: 5.0 }
    }

    fn gap_range(&self) -> (usize, usize) {
        ((self.fps * self.min_gap_s).ceil() as usize, (self.fps * self.max_gap_s).floor() as usize)
    }

    /// Shortest video this policy can sample from.
    pub fn min_length(&self) -> usize {
        2 * self.frames + self.gap_range().0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipWindows {
    pub source_start: usize,
    pub target_start: usize,
    pub frames: usize,
    pub overlapping: bool,
}

impl ClipWindows {
    /// Frames shared by both windows.
    pub fn intersection(&self) -> usize {
        let (a, b) = (self.source_start.min(self.target_start), self.source_start.max(self.target_start));
        (a + self.frames).saturating_sub(b)
    }

    /// Frames strictly between disjoint windows.
    pub fn gap(&self) -> usize {
        let (a, b) = (self.source_start.min(self.target_start), self.source_start.max(self.target_start));
        b.saturating_sub(a + self.frames)
    }
}

/// Draws two windows from a `total`-frame video: disjoint with a 1–5 s gap,
/// or with probability `overlap_pair_fraction` overlapping by at most
/// `overlap_max · F` frames.
pub fn draw_clip_windows(total: usize, policy: &ClipPolicy, cfg: &AugmentConfig, rng: &mut Rng) -> Result<ClipWindows, AugmentError> {
    let f = policy.frames;
    if f == 0 || total < policy.min_length() {
        return Err(AugmentError::VideoTooShort { needed: policy.min_length().max(1), found: total });
    }
    let max_overlap = (cfg.overlap_max * f as f64).floor() as usize;
    let overlap = max_overlap >= 1 && rng.random_bool(cfg.overlap_pair_fraction);
    let (a, b) = if overlap {
        let o = rng.random_range(1..=max_overlap);
        let span = 2 * f - o;
        let a = rng.random_range(0..=total - span);
        (a, a + f - o)
    } else {
        let (gmin, gmax) = policy.gap_range();
        let g = rng.random_range(gmin..=gmax.min(total - 2 * f).max(gmin));
        let a = rng.random_range(0..=total - 2 * f - g);
        (a, a + f + g)
    };
    Ok(ClipWindows { source_start: a, target_start: b, frames: f, overlapping: overlap })
}

/// Cuts a training pair out of one long sequence (the source branch of
/// `long`): the earlier window becomes the source, the later the target.
pub fn sample_clip_pair(long: &ClipPair, policy: &ClipPolicy, cfg: &AugmentConfig, rng: &mut Rng) -> Result<(ClipPair, ClipWindows), AugmentError> {
    let w = draw_clip_windows(long.num_frames(), policy, cfg, rng)?;
    let (a, b, f) = (w.source_start, w.target_start, w.frames);
    let pair = ClipPair {
        source_video: long.source_video.slice(a, f),
        target_video: Some(long.source_video.slice(b, f)),
        source_camera: long.source_camera.slice(a, f),
        target_camera: long.source_camera.slice(b, f),
        source_tracks: long.source_tracks.slice_frames(a, f).expect("window inside video"),
        target_tracks: long.source_tracks.slice_frames(b, f).expect("window inside video"),
        depth: long.depth.as_ref().map(|d| d.slice(a, f)),
        masks: long.masks.as_ref().map(|m| m.slice(a, f)),
    };
    Ok((pair, w))
}

/// Mirrors columns and maps normalized `x ↦ 1 − x`; `y`, `z` and existence
/// are kept.
pub fn horizontal_flip(video: &VideoClip, pt: &ProjectedTracks) -> (VideoClip, ProjectedTracks) {
    (flip_video(video), flip_tracks(pt))
}

pub fn flip_video(video: &VideoClip) -> VideoClip {
    let mut out = video.clone();
    let w = video.width;
    for f in 0..video.frames {
        for r in 0..video.height {
            for c in 0..w {
                out.set_pixel(f, r, w - 1 - c, video.pixel(f, r, c));
            }
        }
    }
    out
}

pub fn flip_tracks(pt: &ProjectedTracks) -> ProjectedTracks {
    let mut out = pt.clone();
    for f in 0..pt.num_frames() {
        for n in 0..pt.num_tracks() {
            let c = out.coord_mut(f, n);
            c[0] = 1.0 - c[0];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub config: AugmentConfig,
    pub epipolar: EpipolarRecord,
    /// `None` when the track count is below the homography subset minimum.
    pub homography: Option<HomographyRecord>,
    pub drift: DriftRecord,
    pub dropped_frames: Vec<usize>,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    pub source_video: VideoClip,
    pub target_video: Option<VideoClip>,
    pub source_tracks: ProjectedTracks,
    pub target_tracks: ProjectedTracks,
    pub record: AugmentRecord,
}

/// The full training augmentation: epipolar jitter on target 3D tracks,
/// projection, homography and drift on projected target tracks, source frame
/// dropout and an optional target flip.
pub fn augment_pair(pair: &ClipPair, cfg: &AugmentConfig) -> Result<AugmentedPair, AugmentError> {
    cfg.validate()?;
    let (w, h) = (pair.width(), pair.height());
    let (jittered, epipolar) = epipolar_jitter(&pair.target_tracks, &pair.source_camera, cfg, &mut derive(cfg.seed, "augment/epipolar"));
    let range = pair_depth_range(&pair.source_tracks, &pair.source_camera, &jittered, &pair.target_camera);
    let source_tracks = project_tracks(&pair.source_tracks, &pair.source_camera, &range);
    let target = project_tracks(&jittered, &pair.target_camera, &range);
    let (target, homography) = match homography_perturb(&target, w, h, cfg, &mut derive(cfg.seed, "augment/homography")) {
        Ok((t, r)) => (t, Some(r)),
        Err(AugmentError::TooFewTracks { .. }) => (target, None),
        Err(e) => return Err(e),
    };
    let (target, drift) = linear_drift(&target, w, h, cfg, &mut derive(cfg.seed, "augment/drift"));
    let (source_video, dropped_frames) = frame_dropout(&pair.source_video, cfg, &mut derive(cfg.seed, "augment/dropout"));
    let flipped = cfg.flip_prob > 0.0 && derive(cfg.seed, "augment/flip").random_bool(cfg.flip_prob);
    let (target_video, target_tracks) = if flipped {
        (pair.target_video.as_ref().map(flip_video), flip_tracks(&target))
    } else {
        (pair.target_video.clone(), target)
    };
    Ok(AugmentedPair {
        source_video,
        target_video,
        source_tracks,
        target_tracks,
        record: AugmentRecord { config: cfg.clone(), epipolar, homography, drift, dropped_frames, flipped },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, CameraFrame, CameraIntrinsics, RigidPose};
    use nalgebra::Vector3;

    fn projected(frames: usize, tracks: usize, seed: u64) -> ProjectedTracks {
        let mut rng = derive(seed, "fixture");
        let coords = (0..frames * tracks).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        ProjectedTracks::new(frames, tracks, coords, vec![true; frames * tracks]).unwrap()
    }

    fn scene(frames: usize, tracks: usize) -> (TrackSet, CameraPath) {
        let mut rng = derive(3, "scene");
        let positions = (0..frames * tracks)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..6.0)))
            .collect();
        let intr = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap();
        let cam = CameraPath::constant(CameraFrame { intrinsics: intr, pose: RigidPose::identity() }, frames).unwrap();
        (TrackSet::from_positions(frames, tracks, positions).unwrap(), cam)
    }

    #[test]
    fn zero_magnitudes_are_identities() {
        let cfg = AugmentConfig::disabled();
        let (ts, cam) = scene(4, 50);
        assert_eq!(epipolar_jitter(&ts, &cam, &cfg, &mut derive(0, "e")).0, ts);
        let pt = projected(5, 60, 1);
        let (h, _) = homography_perturb(&pt, 32, 32, &cfg, &mut derive(0, "h")).unwrap();
        for (a, b) in h.coords().iter().zip(pt.coords()) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9 && a[2] == b[2]);
        }
        assert_eq!(linear_drift(&pt, 32, 32, &cfg, &mut derive(0, "d")).0, pt);
        let video = VideoClip::from_data(3, 2, 2, (0..36).map(|v| v as f32 / 36.0).collect()).unwrap();
        assert_eq!(frame_dropout(&video, &cfg, &mut derive(0, "f")).0, video);
    }

    #[test]
    fn jitter_keeps_source_projection() {
        let (ts, cam) = scene(4, 50);
        let cfg = AugmentConfig { epipolar_fraction: 1.0, epipolar_sigma: 0.3, ..AugmentConfig::default() };
        let (out, rec) = epipolar_jitter(&ts, &cam, &cfg, &mut derive(5, "e"));
        assert!(!rec.indices.is_empty());
        for f in 0..4 {
            let fr = cam.frame(f);
            for n in 0..50 {
                let a = project(ts.position(f, n), &fr.intrinsics, &fr.pose).unwrap();
                let b = project(out.position(f, n), &fr.intrinsics, &fr.pose).unwrap();
                assert!((a.x - b.x).abs() < 1e-6 && (a.y - b.y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn homography_leaves_anchor_and_hits_targets() {
        let pt = projected(6, 80, 2);
        let cfg = AugmentConfig { homography_fraction: 0.5, homography_jitter_px: 4.0, ..AugmentConfig::default() };
        let (out, rec) = homography_perturb(&pt, 32, 32, &cfg, &mut derive(9, "h")).unwrap();
        for n in 0..80 {
            assert_eq!(out.coord(rec.anchor_frame, n), pt.coord(rec.anchor_frame, n));
        }
        for (corr, h) in rec.correspondences.iter().zip(&rec.homographies) {
            let Some(m) = h else { continue };
            let h = Homography::from_matrix(nalgebra::Matrix3::from_row_slice(m)).unwrap();
            for (src, dst) in corr {
                let p = h.apply(*src);
                assert!((p[0] - dst[0]).abs() * 32.0 < 1e-8 && (p[1] - dst[1]).abs() * 32.0 < 1e-8);
            }
        }
        let few = projected(2, 30, 1);
        assert!(matches!(homography_perturb(&few, 32, 32, &AugmentConfig::default(), &mut derive(0, "h")), Err(AugmentError::TooFewTracks { .. })));
    }

    #[test]
    fn drift_is_linear() {
        let pt = projected(12, 40, 4);
        let mut out = pt.clone();
        apply_drift(&mut out, &[3], &[[1.0, 0.0]], 32, 32);
        assert!(((out.coord(10, 3)[0] - pt.coord(10, 3)[0]) * 32.0 - 10.0).abs() < 1e-12);
        let cfg = AugmentConfig { drift_fraction: 1.0, ..AugmentConfig::default() };
        let (out, rec) = linear_drift(&pt, 32, 32, &cfg, &mut derive(1, "d"));
        for &i in &rec.indices {
            for f in 1..11 {
                let d = |k: usize| out.coord(k, i)[0] - pt.coord(k, i)[0];
                assert!((d(f + 1) - 2.0 * d(f) + d(f - 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn caps_hold_over_many_draws() {
        let cfg = AugmentConfig { dropout_max: 0.5, ..AugmentConfig::default() };
        let video = VideoClip::zeros(17, 1, 1);
        let pt = projected(2, 97, 0);
        for seed in 0..1000 {
            let (_, dropped) = frame_dropout(&video, &cfg, &mut derive(seed, "dropout"));
            assert!(dropped.len() as f64 <= 0.5 * 17.0);
            let (_, rec) = linear_drift(&pt, 8, 8, &cfg, &mut derive(seed, "drift"));
            assert!(rec.indices.len() as f64 <= 0.1 * 97.0);
        }
    }

    #[test]
    fn clip_windows_follow_policy() {
        let policy = ClipPolicy::new(16, 10.0);
        let cfg = AugmentConfig { overlap_pair_fraction: 0.5, ..AugmentConfig::default() };
        let (mut saw_overlap, mut saw_gap) = (false, false);
        for seed in 0..500 {
            let w = draw_clip_windows(120, &policy, &cfg, &mut derive(seed, "clips")).unwrap();
            assert!(w.target_start + 16 <= 120);
            if w.overlapping {
                saw_overlap = true;
                assert!(w.intersection() >= 1 && w.intersection() <= 8);
            } else {
                saw_gap = true;
                assert_eq!(w.intersection(), 0);
                assert!((10..=50).contains(&w.gap()));
            }
        }
        assert!(saw_overlap && saw_gap);
        assert!(matches!(draw_clip_windows(41, &policy, &cfg, &mut derive(0, "c")), Err(AugmentError::VideoTooShort { needed: 42, found: 41 })));
    }

    #[test]
    fn flip_mirrors_pixels_and_x() {
        let video = VideoClip::from_data(1, 8, 8, (0..192).map(|v| v as f32).collect()).unwrap();
        let coords = vec![[0.25, 0.1, 0.5], [0.5, 0.2, 0.0], [0.875, 0.3, 1.0]];
        let pt = ProjectedTracks::new(1, 3, coords, vec![true, false, true]).unwrap();
        let (fv, fp) = horizontal_flip(&video, &pt);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(fv.pixel(0, r, c), video.pixel(0, r, 7 - c));
            }
        }
        assert_eq!(fp.coord(0, 0), [0.75, 0.1, 0.5]);
        assert_eq!(fp.existence(), pt.existence());
        assert_eq!(horizontal_flip(&fv, &fp), (video, pt));
    }
}
