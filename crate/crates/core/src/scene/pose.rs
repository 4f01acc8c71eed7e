//! Rigid poses: unit quaternion plus translation.

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::math::{Vec3, V3};

/// Rotation as `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    /// `exp` of a rotation vector.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            return Self { w: 1.0, x: 0.5 * v.x, y: 0.5 * v.y, z: 0.5 * v.z }.normalized();
        }
        Self::from_axis_angle(v, angle)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conj(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn mul(&self, o: &Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotation matrix, row major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        mat_mul(&self.matrix(), v)
    }

    pub fn inverse_rotate(&self, v: Vec3) -> Vec3 {
        mat_t_mul(&self.matrix(), v)
    }
}

pub fn mat_mul<R: Real>(m: &[[f64; 3]; 3], v: V3<R>) -> V3<R> {
    V3::new(
        v.x * m[0][0] + v.y * m[0][1] + v.z * m[0][2],
        v.x * m[1][0] + v.y * m[1][1] + v.z * m[1][2],
        v.x * m[2][0] + v.y * m[2][1] + v.z * m[2][2],
    )
}

pub fn mat_t_mul<R: Real>(m: &[[f64; 3]; 3], v: V3<R>) -> V3<R> {
    V3::new(
        v.x * m[0][0] + v.y * m[1][0] + v.z * m[2][0],
        v.x * m[0][1] + v.y * m[1][1] + v.z * m[2][1],
        v.x * m[0][2] + v.y * m[1][2] + v.z * m[2][2],
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: Quat::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: Quat, translation: Vec3) -> Result<Self> {
        let p = Self { rotation, translation };
        p.validate()?;
        Ok(p)
    }

    pub fn translation(t: Vec3) -> Self {
        Self { rotation: Quat::IDENTITY, translation: t }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.rotation.norm() - 1.0).abs() > 1e-9 || !self.translation.is_finite() {
            return Err(Error::Config("pose rotation must be a unit quaternion".into()));
        }
        Ok(())
    }

    pub fn point_to_world(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn point_to_object(&self, p: Vec3) -> Vec3 {
        self.rotation.inverse_rotate(p - self.translation)
    }

    /// `(R^-1 (origin - t), R^-1 dir)`
    pub fn world_to_object(&self, origin: Vec3, dir: Vec3) -> (Vec3, Vec3) {
        (self.point_to_object(origin), self.rotation.inverse_rotate(dir))
    }

    pub fn object_to_world(&self, origin: Vec3, dir: Vec3) -> (Vec3, Vec3) {
        (self.point_to_world(origin), self.rotation.rotate(dir))
    }

    /// `self` followed by `other` applied in world space.
    pub fn then(&self, other: &Pose) -> Pose {
        Pose {
            rotation: other.rotation.mul(&self.rotation).normalized(),
            translation: other.point_to_world(self.translation),
        }
    }

    /// Retract a tangent step: `t += dt`, `q <- q * exp(dr)`, renormalized.
    pub fn retract(&self, dt: Vec3, dr: Vec3) -> Pose {
        Pose {
            rotation: self.rotation.mul(&Quat::from_rotation_vector(dr)).normalized(),
            translation: self.translation + dt,
        }
    }
}

/// A pose with a differentiable tangent perturbation:
/// `R = R0 (I + [delta]x)`, translation `t`.
#[derive(Clone, Copy, Debug)]
pub struct PoseVar<R> {
    pub r0: [[f64; 3]; 3],
    pub delta: V3<R>,
    pub t: V3<R>,
}

impl<R: Real> PoseVar<R> {
    pub fn constant(pose: &Pose, like: R) -> Self {
        let z = like.lift(0.0);
        Self { r0: pose.rotation.matrix(), delta: V3::new(z, z, z), t: pose.translation.lift(like) }
    }

    /// First-order inverse rotation: `(I - [delta]x) R0^T v`.
    fn inv_rot(&self, v: V3<R>) -> V3<R> {
        let u = mat_t_mul(&self.r0, v);
        u - self.delta.cross(u)
    }

    fn rot(&self, v: V3<R>) -> V3<R> {
        mat_mul(&self.r0, v + self.delta.cross(v))
    }

    pub fn point_to_object(&self, p: V3<R>) -> V3<R> {
        self.inv_rot(p - self.t)
    }

    pub fn dir_to_object(&self, d: V3<R>) -> V3<R> {
        self.inv_rot(d)
    }

    pub fn point_to_world(&self, p: V3<R>) -> V3<R> {
        self.rot(p) + self.t
    }

    pub fn dir_to_world(&self, d: V3<R>) -> V3<R> {
        self.rot(d)
    }
}
