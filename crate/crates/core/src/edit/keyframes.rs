use super::EditError;
use crate::geometry::{interpolate_transform, SimilarityTransform};

/// Non-empty list of `(frame, transform)` with strictly increasing frames.
/// Frames before the first or after the last keyframe hold the end value.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframes(Vec<(usize, SimilarityTransform)>);

impl Keyframes {
    pub fn new(keys: Vec<(usize, SimilarityTransform)>) -> Result<Self, EditError> {
        if keys.is_empty() {
            return Err(EditError::schema("keyframes", "at least one keyframe is required"));
        }
        if let Some(i) = keys.windows(2).position(|w| w[0].0 >= w[1].0) {
            return Err(EditError::schema(format!("keyframes[{}].frame", i + 1), "keyframe frames must be strictly increasing"));
        }
        Ok(Self(keys))
    }

    pub fn constant(t: SimilarityTransform) -> Self {
        Self(vec![(0, t)])
    }

    pub fn keys(&self) -> &[(usize, SimilarityTransform)] {
        &self.0
    }

    pub fn first_frame(&self) -> usize {
        self.0[0].0
    }

    pub fn last_frame(&self) -> usize {
        self.0[self.0.len() - 1].0
    }

    pub fn at(&self, frame: usize) -> SimilarityTransform {
        let keys = &self.0;
        if frame <= keys[0].0 {
            return keys[0].1;
        }
        let upper = keys.partition_point(|(f, _)| *f < frame);
        if upper == keys.len() {
            return keys[keys.len() - 1].1;
        }
        let (fb, b) = keys[upper];
        if fb == frame {
            return b;
        }
        let (fa, a) = keys[upper - 1];
        interpolate_transform(&a, fa as f64, &b, fb as f64, frame as f64)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(_, t)| t.is_identity())
    }

    pub fn check_frames(&self, frames: usize) -> Result<(), EditError> {
        match self.0.iter().find(|(f, _)| *f >= frames) {
            Some(&(frame, _)) => Err(EditError::KeyframeOutOfRange { frame, frames }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn clamps_and_interpolates() {
        let k = Keyframes::new(vec![
            (2, SimilarityTransform::identity()),
            (6, SimilarityTransform::from_translation(Vector3::new(4.0, 0.0, 0.0))),
        ])
        .unwrap();
        assert_eq!(k.at(0).translation.x, 0.0);
        assert_eq!(k.at(4).translation.x, 2.0);
        assert_eq!(k.at(9).translation.x, 4.0);
    }

    #[test]
    fn rejects_unordered() {
        let t = SimilarityTransform::identity();
        assert!(Keyframes::new(vec![(3, t), (3, t)]).is_err());
        assert!(Keyframes::new(vec![]).is_err());
    }
}
