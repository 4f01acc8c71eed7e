//! Classical interface physics and the neural material model.

pub mod classical;
pub mod neural;

pub use classical::{complex_permittivity, fresnel_r_perp, wave_impedance, ClassicalMaterial, MaterialTable, EPS0, ETA0};
pub use neural::{
    interior_attenuation, material_response, InteractionQuery, InteriorSample, MaterialConfig, NeuralMaterial,
};
