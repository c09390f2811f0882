#![allow(dead_code)]

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use trackedit_core::geometry::{project, CameraFrame, CameraIntrinsics, CameraPath, RigidPose};
use trackedit_core::rng::derive;
use trackedit_core::tracks::{DepthMaps, LabelMaps};
use trackedit_core::{ClipPair, TrackSet, VideoClip};

pub const WIDTH: usize = 32;
pub const HEIGHT: usize = 24;
/// Object 1 and object 2 each carry this many tracks; background has 16.
pub const OBJECT_TRACKS: usize = 9;
pub const BACKGROUND_TRACKS: usize = 16;
pub const BACKGROUND_DEPTH: f64 = 6.0;

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(30.0, 30.0, WIDTH as f64 / 2.0, HEIGHT as f64 / 2.0, WIDTH as u32, HEIGHT as u32).unwrap()
}

/// Camera drifting right and yawing slightly.
pub fn camera(frames: usize) -> CameraPath {
    let frames = (0..frames)
        .map(|f| {
            let rot = Rotation3::from_euler_angles(0.0, 0.01 * f as f64, 0.0);
            let pose = RigidPose::new(*rot.matrix(), Vector3::new(-0.02 * f as f64, 0.0, 0.0)).unwrap();
            CameraFrame { intrinsics: intrinsics(), pose }
        })
        .collect();
    CameraPath::new(frames).unwrap()
}

fn object_center(id: u32, f: usize) -> Vector3<f64> {
    match id {
        1 => Vector3::new(-0.6 + 0.03 * f as f64, 0.0, 3.0),
        _ => Vector3::new(0.6, 0.1 - 0.02 * f as f64, 3.6),
    }
}

/// Objects 1 and 2 as 3×3 point grids, then a 4×4 background grid. With
/// `jitter`, background points wobble per frame.
pub fn tracks(frames: usize, jitter: bool) -> TrackSet {
    let mut rng = derive(5, "fixture/jitter");
    let n = 2 * OBJECT_TRACKS + BACKGROUND_TRACKS;
    let mut positions = Vec::with_capacity(frames * n);
    let mut ids = Vec::with_capacity(n);
    for id in [1u32, 2] {
        ids.extend(std::iter::repeat_n(id, OBJECT_TRACKS));
    }
    ids.extend(std::iter::repeat_n(0, BACKGROUND_TRACKS));
    for f in 0..frames {
        for id in [1u32, 2] {
            for k in 0..OBJECT_TRACKS {
                let off = Vector3::new((k % 3) as f64 * 0.1 - 0.1, (k / 3) as f64 * 0.1 - 0.1, 0.0);
                positions.push(object_center(id, f) + off);
            }
        }
        for k in 0..BACKGROUND_TRACKS {
            let mut p = Vector3::new((k % 4) as f64 * 1.0 - 1.5, (k / 4) as f64 * 0.8 - 1.2, BACKGROUND_DEPTH);
            if jitter {
                p += Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            }
            positions.push(p);
        }
    }
    let mut ts = TrackSet::from_positions(frames, n, positions).unwrap();
    for (i, id) in ids.into_iter().enumerate() {
        ts.set_object_id(i, id);
    }
    ts
}

/// Source clip, depth and masks rendered from the same scene: a textured
/// background plane with the two objects as flat squares.
pub fn pair(frames: usize) -> ClipPair {
    let cam = camera(frames);
    let ts = tracks(frames, false);
    let mut video = VideoClip::zeros(frames, HEIGHT, WIDTH);
    let mut depth = vec![0f32; frames * HEIGHT * WIDTH];
    let mut masks = vec![0u8; frames * HEIGHT * WIDTH];
    for f in 0..frames {
        let frame = cam.frame(f);
        for r in 0..HEIGHT {
            for c in 0..WIDTH {
                let i = (f * HEIGHT + r) * WIDTH + c;
                let (u, v) = (c as f64 + 0.5, r as f64 + 0.5);
                video.set_pixel(f, r, c, [(u / WIDTH as f64) as f32, (v / HEIGHT as f64) as f32, 0.3 + 0.2 * ((c + r) % 2) as f32]);
                depth[i] = BACKGROUND_DEPTH as f32;
                for id in [2u32, 1] {
                    let center = project(&object_center(id, f), &frame.intrinsics, &frame.pose).unwrap();
                    let half = 0.15 * frame.intrinsics.fx / center.depth;
                    if (u - center.x).abs() < half && (v - center.y).abs() < half {
                        let rgb = if id == 1 { [0.9, 0.1, 0.1] } else { [0.1, 0.2, 0.9] };
                        video.set_pixel(f, r, c, rgb);
                        depth[i] = center.depth as f32;
                        masks[i] = id as u8;
                    }
                }
            }
        }
    }
    ClipPair {
        source_video: video,
        target_video: None,
        source_camera: cam.clone(),
        target_camera: cam,
        source_tracks: ts.clone(),
        target_tracks: ts,
        depth: Some(DepthMaps { frames, height: HEIGHT, width: WIDTH, data: depth }),
        masks: Some(LabelMaps { frames, height: HEIGHT, width: WIDTH, data: masks }),
    }
}
