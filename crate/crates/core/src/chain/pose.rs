use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Rigid pose in the world frame.
///
/// The orientation is always stored normalized; constructors renormalize
/// whatever quaternion they are handed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation.into_inner()),
        }
    }

    /// Build from a translation and a scalar-first quaternion `[w, x, y, z]`.
    pub fn from_xyz_wxyz(xyz: [f64; 3], wxyz: [f64; 4]) -> Self {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        Self {
            position: Vector3::from(xyz),
            orientation: UnitQuaternion::new_normalize(q),
        }
    }

    pub fn from_translation(xyz: [f64; 3]) -> Self {
        Self {
            position: Vector3::from(xyz),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Scalar-first quaternion components `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    /// Composition `self * other` (apply `other` in the frame of `self`).
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::from_isometry(&(self.to_isometry() * other.to_isometry()))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Linear and angular velocity of a frame, both expressed in world axes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialVelocity {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl SpatialVelocity {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    /// Stacked `(linear, angular)` 6-vector, the row layout of the Jacobian.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|v| v.is_finite())
    }
}

/// Log map of a unit quaternion: rotation axis scaled by angle in `[0, pi]`.
///
/// Uses `atan2` rather than `acos` so small angles keep full precision, and
/// folds the quaternion double cover so `q` and `-q` map to the same vector.
pub fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    let v = q.imag();
    let s = v.norm();
    let w = q.w;
    if s < 1e-300 {
        return Vector3::zeros();
    }
    let sign = if w < 0.0 { -1.0 } else { 1.0 };
    let angle = 2.0 * s.atan2(w.abs());
    v * (sign * angle / s)
}

/// Task-space error `x - x_d`: position difference followed by the rotation
/// vector of `R(x) * R(x_d)^T` (world-frame orientation error).
pub fn pose_error(x: &Pose, x_d: &Pose) -> Vector6<f64> {
    let dp = x.position - x_d.position;
    let rel = x.orientation * x_d.orientation.inverse();
    let dr = rotation_vector(&rel);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}
