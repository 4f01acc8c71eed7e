//! Monte Carlo path tracing over placed primitives.
//!
//! Rays leave the transmitter on a randomly rotated Fibonacci lattice, sphere
//! trace each primitive in its own frame, and at every surface either reflect
//! or penetrate. A ray contributes to a receiver when one of its segments
//! passes within the capture radius; contributions are weighted by a smooth
//! kernel over the miss distance so that the sum over a ray bundle estimates
//! the field of the underlying path.
//!
//! Tracing runs in `f64`. Gradients come from [`replay`], which re-evaluates
//! the attenuation of a recorded path generically over [`Real`](crate::autodiff::Real)
//! with the branch decisions and segment geometry held fixed.

mod channel;
mod engine;
mod launch;
pub mod replay;

use num_complex::Complex64;

use crate::math::Vec3;
use crate::scene::Quat;

pub use channel::{arrival_base, coverage_map, path_signal, power_db, predict_channel, predict_many, ChannelPrediction, CoverageGrid};
pub use engine::{branch_probability, interact, trace_paths, Interaction, RaySample, TraceOutput};
pub use launch::{fibonacci_directions, launch_rays, random_rotation, reflect_dir};

/// Speed of light (m/s)
pub const C: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchMode {
    /// Pick one branch with probability proportional to its coefficient.
    MonteCarlo,
    /// Follow both branches; deterministic, exponential in depth.
    Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracerConfig {
    pub rays: usize,
    /// Maximum number of surface entries along a ray.
    pub max_depth: usize,
    pub eps_hit: f64,
    pub eps_fd: f64,
    pub max_iter: usize,
    pub capture_radius: f64,
    pub seed: u64,
    /// Russian roulette starts below this `|a| * weight`; 0 disables it.
    pub roulette: f64,
    pub interior_step: f64,
    pub mode: BranchMode,
    /// Launch from the receiver and capture at the transmitter.
    pub backward: bool,
    /// Extra rotation applied to the launch lattice.
    pub launch_rotation: Quat,
    pub keep_paths: bool,
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self {
            rays: 1 << 17,
            max_depth: 3,
            eps_hit: 0.01,
            eps_fd: 1e-4,
            max_iter: 512,
            capture_radius: 0.1,
            seed: 0,
            roulette: 1e-4,
            interior_step: 0.02,
            mode: BranchMode::MonteCarlo,
            backward: false,
            launch_rotation: Quat::IDENTITY,
            keep_paths: false,
        }
    }
}

impl TracerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.rays > 0
            && self.eps_hit > 0.0
            && self.eps_fd > 0.0
            && self.max_iter > 0
            && self.capture_radius > 0.0
            && self.roulette >= 0.0
            && self.interior_step > 0.0;
        if !ok {
            return Err(crate::Error::Config("tracer settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Reflect,
    Penetrate,
    /// Leaving a medium after an interior chord.
    Exit,
}

/// Extra state recorded at neural surfaces for the replay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalHit {
    pub normal: Vec3,
    /// Directional derivative of the field along the local ray direction.
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceEvent {
    pub prim: usize,
    /// World ray the hit was found on: `point = origin + dir * t`.
    pub origin: Vec3,
    pub dir: Vec3,
    pub t: f64,
    pub point: Vec3,
    /// Outward unit normal (world).
    pub normal: Vec3,
    pub branch: Branch,
    pub coef: Complex64,
    pub prob: f64,
    pub local: Option<LocalHit>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Launch { origin: Vec3, dir: Vec3, gain: f64 },
    Surface(SurfaceEvent),
    Interior { prim: usize, chord: f64, factor: f64, samples: usize },
}

/// A receiver reached by the final segment of a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub rx: usize,
    /// Distance along the final segment to closest approach.
    pub s: f64,
    pub miss: f64,
    /// Unfolded source-to-receiver distance.
    pub tau: f64,
    /// Kernel weight of this ray at the receiver.
    pub capture: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub ray: usize,
    pub events: Vec<Event>,
    /// Completed segment lengths before the final one.
    pub segments: Vec<f64>,
    /// Product of closed-form coefficients.
    pub analytic: Complex64,
    /// Product of neural coefficients and interior factors.
    pub neural: f64,
    /// `1 / product of branch probabilities`, including roulette.
    pub weight: f64,
    pub launch_gain: f64,
    pub arrivals: Vec<Arrival>,
}

impl PathRecord {
    /// Product of all event attenuations.
    pub fn attenuation(&self) -> Complex64 {
        self.analytic * self.neural
    }

    pub fn travelled(&self) -> f64 {
        self.segments.iter().sum()
    }

    pub fn surface_events(&self) -> impl Iterator<Item = &SurfaceEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Surface(s) => Some(s),
            _ => None,
        })
    }
}
