//! Small vector and complex types generic over [`Real`].

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct V3<R> {
    pub x: R,
    pub y: R,
    pub z: R,
}

pub type Vec3 = V3<f64>;

impl<R> V3<R> {
    pub const fn new(x: R, y: R, z: R) -> Self {
        Self { x, y, z }
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = V3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = V3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = V3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = V3::new(0.0, 0.0, 1.0);

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn axis(i: usize) -> Self {
        match i {
            0 => Self::X,
            1 => Self::Y,
            _ => Self::Z,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    /// Lift into another evaluation context as constants.
    pub fn lift<R: Real>(self, like: R) -> V3<R> {
        V3::new(like.lift(self.x), like.lift(self.y), like.lift(self.z))
    }

    /// Any unit vector orthogonal to `self` (assumed unit).
    pub fn any_orthogonal(self) -> Vec3 {
        let a = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        self.cross(a).normalize()
    }
}

impl<R: Real> V3<R> {
    pub fn value(self) -> Vec3 {
        V3::new(self.x.value(), self.y.value(), self.z.value())
    }

    pub fn detach(self) -> Self {
        V3::new(self.x.detach(), self.y.detach(), self.z.detach())
    }

    pub fn dot(self, o: Self) -> R {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        V3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> R {
        self.dot(self)
    }

    pub fn norm(self) -> R {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: R) -> Self {
        V3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn scale_f(self, s: f64) -> Self {
        V3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        V3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn add_f(self, o: Vec3) -> Self {
        V3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub_f(self, o: Vec3) -> Self {
        V3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn to_arr(self) -> [R; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(self, i: usize) -> R {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl<R: Real> Add for V3<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<R: Real> Sub for V3<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<R: Real> Neg for V3<R> {
    type Output = Self;
    fn neg(self) -> Self {
        V3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale_f(s)
    }
}

pub fn rmax<R: Real>(a: R, b: R) -> R {
    if a.value() >= b.value() {
        a
    } else {
        b
    }
}

pub fn rmin<R: Real>(a: R, b: R) -> R {
    if a.value() <= b.value() {
        a
    } else {
        b
    }
}

pub fn rabs<R: Real>(a: R) -> R {
    if a.value() < 0.0 {
        -a
    } else {
        a
    }
}

/// Mirror `dir` about the plane with unit normal `n`.
pub fn reflect<R: Real>(dir: V3<R>, n: V3<R>) -> V3<R> {
    let k = dir.dot(n) * 2.0;
    dir - n.scale(k)
}

/// Complex number over a [`Real`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cx<R> {
    pub re: R,
    pub im: R,
}

impl<R: Real> Cx<R> {
    pub fn new(re: R, im: R) -> Self {
        Self { re, im }
    }

    pub fn real(re: R) -> Self {
        Self { re, im: re.lift(0.0) }
    }

    pub fn from_c64(c: Complex64, like: R) -> Self {
        Self { re: like.lift(c.re), im: like.lift(c.im) }
    }

    pub fn value(self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }

    pub fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }

    pub fn scale(self, s: R) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    pub fn scale_f(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    pub fn mul_c64(self, c: Complex64) -> Self {
        Self::new(self.re * c.re - self.im * c.im, self.re * c.im + self.im * c.re)
    }

    pub fn norm_sq(self) -> R {
        self.re * self.re + self.im * self.im
    }

    /// `exp(j * phase)`
    pub fn expj(phase: R) -> Self {
        Self::new(phase.cos(), phase.sin())
    }
}

/// Fixed-order pairwise sum; independent of thread scheduling.
pub fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
