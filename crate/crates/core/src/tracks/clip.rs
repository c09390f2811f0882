use super::{DepthMaps, LabelMaps, TrackSet, VideoClip};
use crate::geometry::CameraPath;

/// Everything known about one source/target clip pair. Source and target
/// track sets are index-aligned: track `i` in one corresponds to track `i` in
/// the other.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub source_video: VideoClip,
    pub target_video: Option<VideoClip>,
    pub source_camera: CameraPath,
    pub target_camera: CameraPath,
    pub source_tracks: TrackSet,
    pub target_tracks: TrackSet,
    pub depth: Option<DepthMaps>,
    pub masks: Option<LabelMaps>,
}

impl ClipPair {
    pub fn num_frames(&self) -> usize {
        self.source_video.frames
    }

    pub fn height(&self) -> usize {
        self.source_video.height
    }

    pub fn width(&self) -> usize {
        self.source_video.width
    }

    pub fn num_tracks(&self) -> usize {
        self.source_tracks.num_tracks()
    }

    /// Checks every cross-member invariant. Returns `(field, message)` for the
    /// first violation.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let (f, h, w) = (self.num_frames(), self.height(), self.width());
        let bad = |field: &str, msg: String| Err((field.to_string(), msg));
        if f == 0 {
            return bad("frames", "clip has no frames".into());
        }
        if let Some(t) = &self.target_video {
            if (t.frames, t.height, t.width) != (f, h, w) {
                return bad("target_video", format!("is {}x{}x{}, expected {f}x{h}x{w}", t.frames, t.height, t.width));
            }
        }
        for (name, cam) in [("source_camera", &self.source_camera), ("target_camera", &self.target_camera)] {
            if cam.len() != f {
                return bad(name, format!("has {} frames, expected {f}", cam.len()));
            }
            if (cam.width() as usize, cam.height() as usize) != (w, h) {
                return bad(name, format!("frame size {}x{} differs from video {w}x{h}", cam.width(), cam.height()));
            }
        }
        for (name, ts) in [("source_tracks", &self.source_tracks), ("target_tracks", &self.target_tracks)] {
            if ts.num_frames() != f {
                return bad(name, format!("has {} frames, expected {f}", ts.num_frames()));
            }
        }
        if self.source_tracks.num_tracks() != self.target_tracks.num_tracks() {
            return bad(
                "target_tracks",
                format!(
                    "has {} tracks but source has {}",
                    self.target_tracks.num_tracks(),
                    self.source_tracks.num_tracks()
                ),
            );
        }
        if let Some(d) = &self.depth {
            if (d.frames, d.height, d.width) != (f, h, w) {
                return bad("depth", format!("is {}x{}x{}, expected {f}x{h}x{w}", d.frames, d.height, d.width));
            }
        }
        if let Some(m) = &self.masks {
            if (m.frames, m.height, m.width) != (f, h, w) {
                return bad("masks", format!("is {}x{}x{}, expected {f}x{h}x{w}", m.frames, m.height, m.width));
            }
        }
        Ok(())
    }
}
