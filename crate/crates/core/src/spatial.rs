//! Rigid-body primitives shared by every stage of the pipeline.
//!
//! Points and transforms carry explicit frame labels. Every `compose` and
//! `apply` checks them, so a camera-frame point can never be fed to a
//! transform that expects an arm-base point.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("frame mismatch: expected `{expected}`, found `{found}`")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("rotation is not orthonormal (deviation {deviation:.3e}, det {det:.6})")]
    InvalidRotation { deviation: f64, det: f64 },
    #[error("non-finite component in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Label of a coordinate frame.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame(&'static str);

impl Frame {
    pub const WORLD: Frame = Frame("world");
    pub const ARM_BASE: Frame = Frame("arm_base");
    /// Tool-center-point frame; the end-effector frame in the eye-in-hand chain.
    pub const TOOL: Frame = Frame("tool");
    pub const CAMERA: Frame = Frame("camera");

    pub const fn new(label: &'static str) -> Self {
        Frame(label)
    }

    pub fn label(&self) -> &'static str {
        self.0
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({})", self.0)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

impl Serialize for Frame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0)
    }
}

/// A point in meters, tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub frame: Frame,
}

impl Point3 {
    pub fn new(frame: Frame, x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, frame }
    }

    pub fn from_vector(frame: Frame, v: Vector3<f64>) -> Self {
        Self::new(frame, v.x, v.y, v.z)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.coords().norm()
    }

    /// Euclidean distance; both points must share a frame.
    pub fn distance(&self, other: &Point3) -> Result<f64, SpatialError> {
        expect_frame(self.frame, other.frame)?;
        Ok((self.coords() - other.coords()).norm())
    }

    pub fn offset(&self, delta: Vector3<f64>) -> Point3 {
        Point3::from_vector(self.frame, self.coords() + delta)
    }
}

fn expect_frame(expected: Frame, found: Frame) -> Result<(), SpatialError> {
    if expected == found {
        Ok(())
    } else {
        Err(SpatialError::FrameMismatch { expected, found })
    }
}

/// Largest element of `RᵀR − I`, and the determinant.
pub fn orthonormality(rotation: &Matrix3<f64>) -> (f64, f64) {
    let dev = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
    (dev, rotation.determinant())
}

/// Rigid transform mapping coordinates in `from` into coordinates in `to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub from: Frame,
    pub to: Frame,
}

impl RigidTransform {
    /// Validating constructor.
    pub fn new(
        from: Frame,
        to: Frame,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, SpatialError> {
        if rotation.iter().any(|v| !v.is_finite()) {
            return Err(SpatialError::NonFinite("rotation"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(SpatialError::NonFinite("translation"));
        }
        let (deviation, det) = orthonormality(&rotation);
        if deviation > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(SpatialError::InvalidRotation { deviation, det });
        }
        Ok(Self { rotation, translation, from, to })
    }

    /// Skips validation; for matrices that are orthonormal by construction.
    pub(crate) fn from_parts(
        from: Frame,
        to: Frame,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        Self { rotation, translation, from, to }
    }

    pub fn identity(frame: Frame) -> Self {
        Self::from_parts(frame, frame, Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(from: Frame, to: Frame, translation: Vector3<f64>) -> Self {
        Self::from_parts(from, to, Matrix3::identity(), translation)
    }

    pub fn from_axis_angle(
        from: Frame,
        to: Frame,
        axis: Vector3<f64>,
        angle: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, SpatialError> {
        let rotation = match nalgebra::Unit::try_new(axis, 1e-12) {
            Some(unit) => Rotation3::from_axis_angle(&unit, angle).into_inner(),
            None if angle == 0.0 => Matrix3::identity(),
            None => return Err(SpatialError::NonFinite("axis")),
        };
        Self::new(from, to, rotation, translation)
    }

    /// Quaternion given as (w, x, y, z); normalized before use.
    pub fn from_quaternion(
        from: Frame,
        to: Frame,
        wxyz: [f64; 4],
        translation: Vector3<f64>,
    ) -> Result<Self, SpatialError> {
        let q = nalgebra::Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if q.norm() < 1e-12 || !q.norm().is_finite() {
            return Err(SpatialError::NonFinite("quaternion"));
        }
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        Self::new(from, to, rotation, translation)
    }

    /// Roll-pitch-yaw (extrinsic x, y, z) in radians.
    pub fn from_rpy(
        from: Frame,
        to: Frame,
        rpy: [f64; 3],
        translation: Vector3<f64>,
    ) -> Result<Self, SpatialError> {
        let rotation = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]).into_inner();
        Self::new(from, to, rotation, translation)
    }

    /// `self ∘ other`: maps `other.from` to `self.to`.
    pub fn compose(&self, other: &RigidTransform) -> Result<RigidTransform, SpatialError> {
        expect_frame(self.from, other.to)?;
        Ok(Self::from_parts(
            other.from,
            self.to,
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        ))
    }

    pub fn apply(&self, p: &Point3) -> Result<Point3, SpatialError> {
        expect_frame(self.from, p.frame)?;
        Ok(Point3::from_vector(self.to, self.rotation * p.coords() + self.translation))
    }

    /// Rotates a direction vector; no frame check since directions are untagged.
    pub fn apply_direction(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self::from_parts(self.to, self.from, rt, -(rt * self.translation))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Relabels the frames without touching the numbers.
    pub fn relabeled(&self, from: Frame, to: Frame) -> RigidTransform {
        Self { from, to, ..*self }
    }
}

/// Rotation angle between two rotation matrices, in radians.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Rotation vector (axis × angle) of `r`, robust near π.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Elementary rotation about z.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Pinhole intrinsics; pixel `(u, v)` is the column/row index and pixel
/// centers sit on integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 320×240 at fx = fy = 277 px, roughly a 60° horizontal field of view.
    fn default() -> Self {
        Self { fx: 277.0, fy: 277.0, cx: 160.0, cy: 120.0, width: 320, height: 240 }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, SpatialError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        let bad = |m: &str| Err(SpatialError::InvalidIntrinsics(m.to_owned()));
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be non-zero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame point at optical depth `depth` behind pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::new(
            Frame::CAMERA,
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Point3) -> Result<Option<(f64, f64)>, SpatialError> {
        expect_frame(Frame::CAMERA, p.frame)?;
        if p.z <= 0.0 {
            return Ok(None);
        }
        Ok(Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)))
    }

    /// Unnormalized ray direction through pixel `(u, v)` with unit z.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}
