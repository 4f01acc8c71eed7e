//! Differentiable RF propagation over neural object primitives.
//!
//! Objects are represented by a signed-distance structure network plus a
//! directional-attenuation material network. A sphere-tracing Monte Carlo
//! tracer turns a scene of such primitives into channel predictions, and the
//! whole forward model can be recorded on a tape and fitted to measurements.
//! A classical mesh/Fresnel image-method tracer is included as a baseline.

pub mod autodiff;
pub mod classical;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod materials;
pub mod math;
pub mod scene;
pub mod tracer;

pub use error::{Error, Result};
