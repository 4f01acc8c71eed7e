//! Small scenes shared by the fitting tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::eval::synthesize;
use super::measure::{MeasurementKind, MeasurementSet};
use crate::autodiff::MlpParams;
use crate::geometry::{NeuralSdf, StructureConfig};
use crate::materials::{MaterialConfig, NeuralMaterial};
use crate::math::Vec3;
use crate::scene::{Bounds, NeuralPrimitive, PlacedPrimitive, Pose, Radio, Scene};
use crate::tracer::{BranchMode, TracerConfig};

pub const FREQ: f64 = 2.4e9;

pub fn primitive(radius: f64, seed: u64) -> NeuralPrimitive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = StructureConfig::default();
    let s = NeuralSdf::geometric_init(&cfg, Vec3::ZERO, 0.6, radius, &mut rng).unwrap();
    let m = MlpParams::kaiming_uniform(&MaterialConfig::default().mlp(cfg.feature_dim), &mut rng).unwrap();
    NeuralPrimitive::new(s, NeuralMaterial::new(m, cfg.feature_dim, 4.0).unwrap()).unwrap()
}

pub fn scene_with(prim: NeuralPrimitive, pose: Pose) -> Scene {
    Scene::empty(Bounds::cube(4.0), FREQ).with_primitive(PlacedPrimitive::neural("obj", prim, pose).dynamic(true))
}

pub fn tracer() -> TracerConfig {
    TracerConfig { rays: 8192, capture_radius: 0.4, mode: BranchMode::Split, roulette: 0.0, interior_step: 0.1, ..Default::default() }
}

pub fn tx() -> Radio {
    Radio::tx("tx", Vec3::new(-2.0, 0.0, 0.0))
}

/// Receivers behind the object, spread over a small patch.
pub fn receivers(n: usize) -> Vec<Vec3> {
    (0..n).map(|i| Vec3::new(1.5, -0.3 + 0.6 * (i % 4) as f64 / 3.0, -0.2 + 0.4 * (i / 4) as f64 / ((n / 4).max(1) as f64))).collect()
}

pub fn measurements(scene: &Scene, n: usize) -> MeasurementSet {
    synthesize(scene, &tx(), &receivers(n), FREQ, MeasurementKind::PowerDb, &tracer(), None).unwrap()
}
