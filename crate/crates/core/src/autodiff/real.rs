//! Scalar abstraction shared by plain `f64` evaluation and taped evaluation.
//!
//! Geometry, material and tracer kernels are written once against [`Real`];
//! running them with `f64` gives fast forward values, running them with
//! [`Var`](super::tape::Var) records the same computation for reverse mode.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::mlp::NetRef;

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same evaluation context as `self`.
    fn lift(self, v: f64) -> Self;
    /// Same value, no derivative.
    fn detach(self) -> Self {
        self.lift(self.value())
    }
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sigmoid(self) -> Self;
    fn relu(self) -> Self;
    fn recip(self) -> Self;

    /// `W x + b` for one layer of a network.
    fn affine(net: &NetRef<'_>, layer: usize, x: &[Self]) -> Vec<Self>;

    fn square(self) -> Self {
        self * self
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn lift(self, v: f64) -> f64 {
        v
    }
    #[inline]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        f64::cos(self)
    }
    #[inline]
    fn sigmoid(self) -> f64 {
        sigmoid_f64(self)
    }
    #[inline]
    fn relu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline]
    fn recip(self) -> f64 {
        1.0 / self
    }

    fn affine(net: &NetRef<'_>, layer: usize, x: &[f64]) -> Vec<f64> {
        let l = net.params.layer(layer);
        debug_assert_eq!(x.len(), l.n_in);
        let (w, b) = net.params.layer_slices(layer);
        let mut out = b.to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &w[j * l.n_in..(j + 1) * l.n_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *o += acc;
        }
        out
    }
}
