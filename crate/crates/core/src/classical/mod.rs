//! Mesh ray tracing with Fresnel reflection: the conventional baseline and
//! the deterministic reference for the neural tracer.

pub mod mesh;
pub mod paths;

pub use mesh::{moller_trumbore, Plane, TriangleMesh};
pub use paths::{
    efield_sum, enumerate_specular_paths, path_coefficient, path_field, predict_classical, reflection_coefficient,
    transmission_coefficient, ClassicalPrediction, Contact, SpecularPath, ABSORBER, MAX_BOUNCES, PEC,
};
