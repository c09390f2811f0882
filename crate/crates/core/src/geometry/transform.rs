use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::{GeometryError, RigidPose};

/// `p ↦ scale · R · p + translation`, the carrier of user 3D edits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GeometryError::InvalidTransform(format!("scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|v| v.is_finite()) || !rotation.coords.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite component".into()));
        }
        Ok(Self { scale, rotation, translation })
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Builds a transform from a `[w, x, y, z]` quaternion, normalizing it.
    pub fn from_parts(scale: f64, quat_wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quat_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(GeometryError::InvalidTransform("quaternion has zero norm".into()));
        }
        // Keep exactly-unit inputs bit-identical.
        let rotation = if norm == 1.0 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Self::new(scale, rotation, Vector3::from(translation))
    }

    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.translation == Vector3::zeros() && self.is_pure_translation()
    }

    /// True when the transform is `p ↦ p + t` exactly.
    pub fn is_pure_translation(&self) -> bool {
        let q = self.rotation.quaternion();
        self.scale == 1.0 && q.i == 0.0 && q.j == 0.0 && q.k == 0.0
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        if self.is_pure_translation() {
            return p + self.translation;
        }
        self.rotation_matrix() * p * self.scale + self.translation
    }

    /// Applies the transform with `pivot` as the origin: `pivot + sR(p − pivot) + t`.
    pub fn apply_about(&self, p: &Vector3<f64>, pivot: &Vector3<f64>) -> Vector3<f64> {
        if self.is_pure_translation() {
            return p + self.translation;
        }
        pivot + self.rotation_matrix() * (p - pivot) * self.scale + self.translation
    }

    /// Interprets a unit-scale transform as a rigid pose.
    pub fn to_rigid(&self) -> Result<RigidPose, GeometryError> {
        if self.scale != 1.0 {
            return Err(GeometryError::InvalidTransform(format!("rigid pose needs scale 1, got {}", self.scale)));
        }
        Ok(RigidPose {
            rotation: self.rotation_matrix(),
            translation: self.translation,
        })
    }
}

/// Shortest-arc spherical interpolation between unit quaternions.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, alpha: f64) -> UnitQuaternion<f64> {
    let qa = a.quaternion();
    let mut qb = *b.quaternion();
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    if dot > 1.0 - 1e-12 {
        // Nearly identical: normalized lerp avoids dividing by sin(0).
        return UnitQuaternion::new_normalize(qa.lerp(&qb, alpha));
    }
    let theta = dot.min(1.0).acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - alpha) * theta).sin() / sin_theta;
    let wb = (alpha * theta).sin() / sin_theta;
    UnitQuaternion::new_normalize(qa * wa + qb * wb)
}

/// Interpolates between keyframe `a` at frame `fa` and `b` at frame `fb`.
/// Translation and log-scale are linear; rotation uses [`slerp`]. Frames
/// outside `[fa, fb]` clamp to the nearest endpoint.
pub fn interpolate_transform(a: &SimilarityTransform, fa: f64, b: &SimilarityTransform, fb: f64, f: f64) -> SimilarityTransform {
    if f <= fa || fb <= fa {
        return *a;
    }
    if f >= fb {
        return *b;
    }
    if a == b {
        return *a;
    }
    let alpha = (f - fa) / (fb - fa);
    let scale = if a.scale == b.scale {
        a.scale
    } else {
        ((1.0 - alpha) * a.scale.ln() + alpha * b.scale.ln()).exp()
    };
    let rotation = if a.rotation == b.rotation {
        a.rotation
    } else {
        slerp(&a.rotation, &b.rotation, alpha)
    };
    SimilarityTransform {
        scale,
        rotation,
        translation: a.translation * (1.0 - alpha) + b.translation * alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Unit;
    use std::f64::consts::FRAC_PI_2;

    fn z_rotation(angle: f64) -> SimilarityTransform {
        SimilarityTransform {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
            ..SimilarityTransform::identity()
        }
    }

    #[test]
    fn endpoints_are_exact() {
        let a = SimilarityTransform::from_parts(1.3, [0.9, 0.1, -0.2, 0.3], [1.0, 2.0, 3.0]).unwrap();
        let b = SimilarityTransform::from_parts(0.7, [0.1, 0.9, 0.3, -0.2], [-1.0, 0.5, 0.0]).unwrap();
        assert_eq!(interpolate_transform(&a, 2.0, &b, 8.0, 2.0), a);
        assert_eq!(interpolate_transform(&a, 2.0, &b, 8.0, 8.0), b);
        assert_eq!(interpolate_transform(&a, 2.0, &b, 8.0, 0.0), a);
        assert_eq!(interpolate_transform(&a, 2.0, &b, 8.0, 9.0), b);
    }

    #[test]
    fn translation_midpoint() {
        let a = SimilarityTransform::identity();
        let b = SimilarityTransform::from_translation(Vector3::new(2.0, 0.0, 0.0));
        let m = interpolate_transform(&a, 0.0, &b, 2.0, 1.0);
        assert_eq!(m.translation, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(m.scale, 1.0);
    }

    #[test]
    fn log_scale_midpoint() {
        let a = SimilarityTransform::new(1.0, UnitQuaternion::identity(), Vector3::zeros()).unwrap();
        let b = SimilarityTransform::new(4.0, UnitQuaternion::identity(), Vector3::zeros()).unwrap();
        let m = interpolate_transform(&a, 0.0, &b, 1.0, 0.5);
        assert!((m.scale - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_midpoint_matches_axis_angle_halving() {
        let a = SimilarityTransform::identity();
        let b = z_rotation(FRAC_PI_2);
        let m = interpolate_transform(&a, 0.0, &b, 10.0, 5.0);
        // Axis-angle oracle: half of 90° about z is 45° about z.
        let half = std::f64::consts::FRAC_PI_4;
        let expected = Matrix3::new(half.cos(), -half.sin(), 0.0, half.sin(), half.cos(), 0.0, 0.0, 0.0, 1.0);
        assert!((m.rotation_matrix() - expected).abs().max() < 1e-12);
    }

    #[test]
    fn slerp_takes_shortest_arc() {
        let a = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1);
        // Same rotation as +0.3 rad but with the opposite quaternion sign.
        let b = UnitQuaternion::new_unchecked(-*UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.3).quaternion());
        let m = slerp(&a, &b, 0.5);
        assert!((m.angle() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn apply_about_pivot_keeps_pivot_fixed() {
        let t = SimilarityTransform {
            scale: 2.0,
            rotation: UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 1.0, 0.0)), 0.7),
            translation: Vector3::zeros(),
        };
        let pivot = Vector3::new(1.0, -2.0, 3.0);
        assert!((t.apply_about(&pivot, &pivot) - pivot).norm() < 1e-15);
    }

    #[test]
    fn pure_translation_is_exact_addition() {
        let t = SimilarityTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let p = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(t.apply_about(&p, &Vector3::new(5.0, 5.0, 5.0)), p + Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_bad_scale() {
        assert!(SimilarityTransform::from_parts(0.0, [1.0, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
        assert!(SimilarityTransform::from_parts(1.0, [0.0, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
    }
}
