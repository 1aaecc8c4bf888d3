//! Pinhole camera, stereo rig, rigid transforms and point clouds.
//!
//! Units are millimetres for every length and pixels for image coordinates.
//! Image coordinates put `u` to the right and `v` downward, with integer
//! values at pixel centres: pixel `(i, j)` is centred on `(u, v) = (i, j)`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Tolerance on orthonormality and determinant of a rotation matrix.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Depth at or below which a point counts as behind the camera.
pub const MIN_PROJECTABLE_DEPTH: f64 = 1e-6;

/// Pinhole intrinsics of a rectified camera.
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
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1 (got {}x{})",
                self.width, self.height
            )));
        }
        let cx_ok = self.cx.is_finite() && self.cx >= 0.0 && self.cx < self.width as f64;
        let cy_ok = self.cy.is_finite() && self.cy >= 0.0 && self.cy < self.height as f64;
        if !(cx_ok && cy_ok) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Projects a camera-frame point to pixel coordinates.
    ///
    /// Returns `None` when the point is not in front of the camera. The
    /// result may fall outside the image bounds.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= MIN_PROJECTABLE_DEPTH {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Inverse of [`project`](Self::project) for a known depth `z`.
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Result<Vector3<f64>> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(self.back_project_unchecked(u, v, z))
    }

    #[inline]
    pub(crate) fn back_project_unchecked(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Intrinsics of the sub-window starting at pixel `(x0, y0)`. The
    /// principal point may leave the window; the result is only used
    /// internally for rendering regions of interest.
    pub(crate) fn crop(&self, x0: u32, y0: u32, width: u32, height: u32) -> Self {
        Self {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx - x0 as f64,
            cy: self.cy - y0 as f64,
            width,
            height,
        }
    }
}

/// Rectified stereo pair sharing one set of intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Distance between the camera centres, in millimetres.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        intrinsics.validate()?;
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "baseline must be positive, got {baseline} mm"
            )));
        }
        Ok(Self {
            intrinsics,
            baseline,
        })
    }
}

/// Element of SE(3) mapping model coordinates into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1 within [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if let Some(problem) = rotation_defect(&rotation) {
            return Err(Error::InvalidTransform(problem));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTransform(
                "translation has non-finite components".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a transform from a rotation that may have drifted slightly from
    /// SO(3), projecting it back when needed.
    pub fn from_parts_normalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: if rotation_defect(&rotation).is_some() {
                orthonormalize(&rotation)
            } else {
                rotation
            },
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalised).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let axis = Unit::new_normalize(*axis);
        Self::from_rotation(Rotation3::from_axis_angle(&axis, angle))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self::from_parts_normalized(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
        }
    }

    /// Geodesic angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0)
            .clamp(-1.0, 1.0)
            .acos()
    }

    /// Geodesic distance between the rotation parts of two transforms, radians.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        self.inverse().compose(other).rotation_angle()
    }

    /// Row-major rotation followed by translation, the on-disk layout.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_row_major(r: &[f64; 9], t: &[f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(r), Vector3::new(t[0], t[1], t[2]))
    }
}

/// Describes why `r` is not a proper rotation, or `None` if it is one.
fn rotation_defect(r: &Matrix3<f64>) -> Option<String> {
    if r.iter().any(|x| !x.is_finite()) {
        return Some("rotation has non-finite entries".into());
    }
    let gram = r.transpose() * r - Matrix3::identity();
    let worst = gram.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if worst > ROTATION_TOLERANCE {
        return Some(format!(
            "rotation is not orthonormal (max |RᵀR − I| = {worst:.3e})"
        ));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Some(format!("rotation determinant is {det}, expected +1"));
    }
    None
}

/// Nearest rotation matrix in the Frobenius sense.
pub(crate) fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    u * fix * v_t
}

/// A set of 3D points in one frame (camera or model), millimetres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter(
                "point cloud contains non-finite coordinates".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }
}
