//! Distance fields, normals, sphere tracing and field regularizers.

pub mod regularize;
pub mod sdf;
pub mod trace;

pub use regularize::{eikonal_residual, laplacian_residual, mean_abs_eikonal, regularizers};
pub use sdf::{fd_gradient, random_unit, sample_in_ball, sdf_eval, sdf_normal, AnalyticSdf, Field, NeuralField, NeuralSdf, StructureConfig};
pub use trace::{interior_march, interior_march_within, ray_sphere, sphere_trace, sphere_trace_with, HitResult, Interior, TraceOptions};
