use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, MIN_DEPTH};

/// Tolerance used when validating rotation matrices.
const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole intrinsics in pixels. Pixel `(r, c)` covers `[c, c+1) x [r, r+1)`,
/// so its center sits at `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("frame size must be nonzero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} frame",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Whether a pixel coordinate falls inside the frame.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }
}

/// World-to-camera rigid transform: `p_cam = rotation * p_world + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite value".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation not orthonormal (error {err:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation determinant {det}")));
        }
        Ok(())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Projects the rotation back onto SO(3) via SVD.
    pub fn renormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self {
            rotation: r,
            translation: self.translation,
        }
    }
}

/// One frame of a camera path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidPose,
}

/// Per-frame intrinsics and world-to-camera poses of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPath {
    frames: Vec<CameraFrame>,
}

impl CameraPath {
    pub fn new(frames: Vec<CameraFrame>) -> Result<Self, GeometryError> {
        let Some(first) = frames.first() else {
            return Err(GeometryError::InvalidPath("camera path needs at least one frame".into()));
        };
        let (w, h) = (first.intrinsics.width, first.intrinsics.height);
        for (i, f) in frames.iter().enumerate() {
            f.intrinsics.validate()?;
            f.pose.validate()?;
            if f.intrinsics.width != w || f.intrinsics.height != h {
                return Err(GeometryError::InvalidPath(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.intrinsics.width, f.intrinsics.height
                )));
            }
        }
        Ok(Self { frames })
    }

    /// Same camera for `count` frames.
    pub fn constant(frame: CameraFrame, count: usize) -> Result<Self, GeometryError> {
        Self::new(vec![frame; count])
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[CameraFrame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &CameraFrame {
        &self.frames[i]
    }

    pub fn width(&self) -> u32 {
        self.frames[0].intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.frames[0].intrinsics.height
    }

    /// Contiguous window of frames `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            frames: self.frames[start..start + len].to_vec(),
        }
    }

    pub fn to_records(&self) -> Vec<CameraRecord> {
        self.frames.iter().map(CameraRecord::from).collect()
    }

    pub fn from_records(records: &[CameraRecord]) -> Result<Self, GeometryError> {
        Self::new(records.iter().map(CameraFrame::try_from).collect::<Result<_, _>>()?)
    }
}

/// One entry of `camera.json`: intrinsics, row-major rotation `R` and translation `t`
/// of the world-to-camera transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&CameraFrame> for CameraRecord {
    fn from(f: &CameraFrame) -> Self {
        let m = &f.pose.rotation;
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = m[(row, col)];
            }
        }
        let i = &f.intrinsics;
        Self {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
            r,
            t: [f.pose.translation.x, f.pose.translation.y, f.pose.translation.z],
        }
    }
}

impl TryFrom<&CameraRecord> for CameraFrame {
    type Error = GeometryError;

    fn try_from(r: &CameraRecord) -> Result<Self, GeometryError> {
        Ok(CameraFrame {
            intrinsics: CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)?,
            pose: RigidPose::new(Matrix3::from_row_slice(&r.r), Vector3::from(r.t))?,
        })
    }
}

/// Pixel position and camera-space depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

pub fn project(p: &Vector3<f64>, intr: &CameraIntrinsics, pose: &RigidPose) -> Result<Projection, GeometryError> {
    let pc = pose.transform_point(p);
    if pc.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera(pc.z));
    }
    Ok(Projection {
        x: intr.fx * (pc.x / pc.z) + intr.cx,
        y: intr.fy * (pc.y / pc.z) + intr.cy,
        depth: pc.z,
    })
}

pub fn unproject(x: f64, y: f64, depth: f64, intr: &CameraIntrinsics, pose: &RigidPose) -> Result<Vector3<f64>, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let pc = Vector3::new((x - intr.cx) / intr.fx * depth, (y - intr.cy) / intr.fy * depth, depth);
    Ok(pose.rotation.transpose() * (pc - pose.translation))
}
