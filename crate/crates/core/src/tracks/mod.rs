//! Track data model, project files, screen projection and track sampling.

mod clip;
pub mod io;
mod projection;
mod sampling;
mod video;

pub use clip::ClipPair;
pub use io::{load_project, save_project, TrackIoError};
pub use projection::{pair_depth_range, project_pair, project_tracks, temporal_downsample, downsample_indices};
pub use sampling::{label_tracks_by_mask, sample_tracks, DEFAULT_FOREGROUND_FRACTION};
pub use video::{DepthMaps, LabelMaps, VideoClip};

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("shape mismatch in {field}: expected {expected}, found {found}")]
    ShapeMismatch { field: String, expected: usize, found: usize },
    #[error("a track set needs at least one track and one frame")]
    Empty,
    #[error("track index {index} out of range for {count} tracks")]
    IndexOutOfRange { index: usize, count: usize },
}

/// World-space trajectories of `N` points over `F` frames.
///
/// Per-frame arrays are frame-major: entry `(f, n)` lives at `f * N + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    frames: usize,
    tracks: usize,
    positions: Vec<Vector3<f64>>,
    object_id: Vec<u32>,
    existence: Vec<bool>,
    visibility: Vec<bool>,
}

impl TrackSet {
    pub fn new(
        frames: usize,
        tracks: usize,
        positions: Vec<Vector3<f64>>,
        object_id: Vec<u32>,
        existence: Vec<bool>,
        visibility: Vec<bool>,
    ) -> Result<Self, TrackError> {
        if frames == 0 || tracks == 0 {
            return Err(TrackError::Empty);
        }
        let expect = |field: &str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(TrackError::ShapeMismatch {
                    field: field.into(),
                    expected,
                    found,
                })
            }
        };
        expect("positions", frames * tracks, positions.len())?;
        expect("object_id", tracks, object_id.len())?;
        expect("existence", frames * tracks, existence.len())?;
        expect("visibility", frames * tracks, visibility.len())?;
        Ok(Self {
            frames,
            tracks,
            positions,
            object_id,
            existence,
            visibility,
        })
    }

    /// All tracks existing and visible, labeled background.
    pub fn from_positions(frames: usize, tracks: usize, positions: Vec<Vector3<f64>>) -> Result<Self, TrackError> {
        let n = frames * tracks;
        Self::new(frames, tracks, positions, vec![0; tracks], vec![true; n], vec![true; n])
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_tracks(&self) -> usize {
        self.tracks
    }

    pub fn position(&self, frame: usize, track: usize) -> &Vector3<f64> {
        &self.positions[frame * self.tracks + track]
    }

    pub fn position_mut(&mut self, frame: usize, track: usize) -> &mut Vector3<f64> {
        &mut self.positions[frame * self.tracks + track]
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn object_ids(&self) -> &[u32] {
        &self.object_id
    }

    pub fn object_id(&self, track: usize) -> u32 {
        self.object_id[track]
    }

    pub fn set_object_id(&mut self, track: usize, id: u32) {
        self.object_id[track] = id;
    }

    pub fn exists(&self, frame: usize, track: usize) -> bool {
        self.existence[frame * self.tracks + track]
    }

    pub fn set_exists(&mut self, frame: usize, track: usize, value: bool) {
        self.existence[frame * self.tracks + track] = value;
    }

    pub fn existence(&self) -> &[bool] {
        &self.existence
    }

    /// Stored for round-tripping; the conditioner never reads it.
    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    pub fn set_visible(&mut self, frame: usize, track: usize, value: bool) {
        self.visibility[frame * self.tracks + track] = value;
    }

    /// Indices of tracks carrying `id`, in ascending order.
    pub fn tracks_with_object(&self, id: u32) -> Vec<usize> {
        (0..self.tracks).filter(|&i| self.object_id[i] == id).collect()
    }

    /// Distinct object ids in ascending order.
    pub fn object_ids_present(&self) -> Vec<u32> {
        let mut ids = self.object_id.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Keeps the tracks at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, TrackError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.tracks) {
            return Err(TrackError::IndexOutOfRange {
                index: bad,
                count: self.tracks,
            });
        }
        let gather = |data: &dyn Fn(usize) -> usize| -> Vec<usize> {
            (0..self.frames).flat_map(|f| indices.iter().map(move |&i| f * self.tracks + i)).map(data).collect()
        };
        let flat = gather(&|k| k);
        Self::new(
            self.frames,
            indices.len(),
            flat.iter().map(|&k| self.positions[k]).collect(),
            indices.iter().map(|&i| self.object_id[i]).collect(),
            flat.iter().map(|&k| self.existence[k]).collect(),
            flat.iter().map(|&k| self.visibility[k]).collect(),
        )
    }

    /// Appends the tracks of `other` (same frame count) after the existing ones.
    pub fn append(&self, other: &TrackSet) -> Result<Self, TrackError> {
        if other.frames != self.frames {
            return Err(TrackError::ShapeMismatch {
                field: "frames".into(),
                expected: self.frames,
                found: other.frames,
            });
        }
        let n = self.tracks + other.tracks;
        let mut positions = Vec::with_capacity(self.frames * n);
        let mut existence = Vec::with_capacity(self.frames * n);
        let mut visibility = Vec::with_capacity(self.frames * n);
        for f in 0..self.frames {
            let (a, b) = (f * self.tracks, f * other.tracks);
            positions.extend_from_slice(&self.positions[a..a + self.tracks]);
            positions.extend_from_slice(&other.positions[b..b + other.tracks]);
            existence.extend_from_slice(&self.existence[a..a + self.tracks]);
            existence.extend_from_slice(&other.existence[b..b + other.tracks]);
            visibility.extend_from_slice(&self.visibility[a..a + self.tracks]);
            visibility.extend_from_slice(&other.visibility[b..b + other.tracks]);
        }
        let mut object_id = self.object_id.clone();
        object_id.extend_from_slice(&other.object_id);
        Self::new(self.frames, n, positions, object_id, existence, visibility)
    }

    /// Frames `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self, TrackError> {
        if start + len > self.frames {
            return Err(TrackError::ShapeMismatch {
                field: "frames".into(),
                expected: start + len,
                found: self.frames,
            });
        }
        let r = start * self.tracks..(start + len) * self.tracks;
        Self::new(
            len,
            self.tracks,
            self.positions[r.clone()].to_vec(),
            self.object_id.clone(),
            self.existence[r.clone()].to_vec(),
            self.visibility[r].to_vec(),
        )
    }

    /// Centroid of the given tracks at `frame`.
    pub fn centroid(&self, frame: usize, indices: &[usize]) -> Vector3<f64> {
        let sum: Vector3<f64> = indices.iter().map(|&i| *self.position(frame, i)).sum();
        sum / indices.len().max(1) as f64
    }
}

/// Screen-space tracks: `(x / width, y / height, normalized disparity)` per
/// frame and track, plus existence. Visibility is deliberately absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTracks {
    frames: usize,
    tracks: usize,
    coords: Vec<[f64; 3]>,
    existence: Vec<bool>,
}

impl ProjectedTracks {
    pub fn new(frames: usize, tracks: usize, coords: Vec<[f64; 3]>, existence: Vec<bool>) -> Result<Self, TrackError> {
        if coords.len() != frames * tracks {
            return Err(TrackError::ShapeMismatch {
                field: "coords".into(),
                expected: frames * tracks,
                found: coords.len(),
            });
        }
        if existence.len() != frames * tracks {
            return Err(TrackError::ShapeMismatch {
                field: "existence".into(),
                expected: frames * tracks,
                found: existence.len(),
            });
        }
        Ok(Self {
            frames,
            tracks,
            coords,
            existence,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames
    }

    pub fn num_tracks(&self) -> usize {
        self.tracks
    }

    pub fn coord(&self, frame: usize, track: usize) -> [f64; 3] {
        self.coords[frame * self.tracks + track]
    }

    pub fn coord_mut(&mut self, frame: usize, track: usize) -> &mut [f64; 3] {
        &mut self.coords[frame * self.tracks + track]
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn exists(&self, frame: usize, track: usize) -> bool {
        self.existence[frame * self.tracks + track]
    }

    pub fn existence(&self) -> &[bool] {
        &self.existence
    }

    /// `(x, y, z, existence)` rows for frame `frame`, the conditioner's input.
    pub fn frame_inputs(&self, frame: usize) -> Vec<[f64; 4]> {
        (0..self.tracks)
            .map(|n| {
                let c = self.coord(frame, n);
                [c[0], c[1], c[2], if self.exists(frame, n) { 1.0 } else { 0.0 }]
            })
            .collect()
    }

    /// Keeps the tracks at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.frames * indices.len());
        let mut existence = Vec::with_capacity(self.frames * indices.len());
        for f in 0..self.frames {
            for &i in indices {
                coords.push(self.coord(f, i));
                existence.push(self.exists(f, i));
            }
        }
        Self {
            frames: self.frames,
            tracks: indices.len(),
            coords,
            existence,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrackSet {
        let positions = (0..6).map(|i| Vector3::new(i as f64, 0.0, 1.0)).collect();
        TrackSet::new(2, 3, positions, vec![0, 1, 2], vec![true; 6], vec![true, false, true, true, true, false]).unwrap()
    }

    #[test]
    fn shapes_are_checked() {
        assert!(matches!(
            TrackSet::from_positions(2, 3, vec![Vector3::zeros(); 5]),
            Err(TrackError::ShapeMismatch { .. })
        ));
        assert_eq!(TrackSet::from_positions(0, 3, vec![]), Err(TrackError::Empty));
    }

    #[test]
    fn subset_and_append() {
        let ts = sample();
        let sub = ts.subset(&[2, 0]).unwrap();
        assert_eq!(sub.object_ids(), &[2, 0]);
        assert_eq!(sub.position(1, 0).x, 5.0);
        assert!(!sub.visibility()[2]);
        assert!(sub.visibility()[3]);
        let joined = ts.append(&sub).unwrap();
        assert_eq!(joined.num_tracks(), 5);
        assert_eq!(joined.position(1, 3), sub.position(1, 0));
        assert_eq!(joined.position(1, 2), ts.position(1, 2));
        assert!(ts.subset(&[3]).is_err());
    }

    #[test]
    fn object_queries() {
        let ts = sample();
        assert_eq!(ts.tracks_with_object(1), vec![1]);
        assert_eq!(ts.object_ids_present(), vec![0, 1, 2]);
    }
}
