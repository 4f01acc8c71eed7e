//! Optional TOML run configuration; command-line flags take precedence.
//!
//! ```toml
//! [tracer]
//! rays = 65536
//! capture_radius = 0.15
//! mode = "split"        # or "monte-carlo"
//!
//! [train]
//! iterations = 500
//! lambda_eik = 10.0
//! ```

use std::path::Path;

use rfprim::fit::TrainConfig;
use rfprim::tracer::{BranchMode, TracerConfig};
use serde::Deserialize;

use crate::args::TracerFlags;
use crate::{CliError, CliResult};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TracerSection {
    pub rays: Option<usize>,
    pub max_depth: Option<usize>,
    pub capture_radius: Option<f64>,
    pub seed: Option<u64>,
    pub roulette: Option<f64>,
    pub interior_step: Option<f64>,
    pub eps_hit: Option<f64>,
    pub max_iter: Option<usize>,
    pub mode: Option<String>,
    pub backward: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub iterations: Option<usize>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub structure_lr_scale: Option<f64>,
    pub lambda_eik: Option<f64>,
    pub lambda_lap: Option<f64>,
    pub seed: Option<u64>,
    pub retrace_every: Option<usize>,
    pub reg_samples: Option<usize>,
    pub reg_step: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tracer: TracerSection,
    pub train: TrainSection,
}

fn set<T: Copy>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Runtime(rfprim::Error::Format(format!("run config: {e}"))))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    /// `base` with the file's tracer table and then `flags` applied.
    pub fn tracer(&self, mut base: TracerConfig, flags: &TracerFlags) -> CliResult<TracerConfig> {
        let t = &self.tracer;
        set(&mut base.rays, t.rays);
        set(&mut base.max_depth, t.max_depth);
        set(&mut base.capture_radius, t.capture_radius);
        set(&mut base.seed, t.seed);
        set(&mut base.roulette, t.roulette);
        set(&mut base.interior_step, t.interior_step);
        set(&mut base.eps_hit, t.eps_hit);
        set(&mut base.max_iter, t.max_iter);
        set(&mut base.backward, t.backward);
        if let Some(m) = &t.mode {
            base.mode = match m.as_str() {
                "split" => BranchMode::Split,
                "monte-carlo" => BranchMode::MonteCarlo,
                other => return Err(CliError::Usage(format!("unknown tracer mode '{other}'"))),
            };
        }
        set(&mut base.seed, flags.seed);
        set(&mut base.rays, flags.rays);
        set(&mut base.max_depth, flags.max_depth);
        base.validate()?;
        Ok(base)
    }

    /// `base` with the file's train table applied; the tracer comes from
    /// [`RunConfig::tracer`] on `base.tracer`.
    pub fn train(&self, mut base: TrainConfig, flags: &TracerFlags) -> CliResult<TrainConfig> {
        let t = &self.train;
        set(&mut base.batch_size, t.batch_size);
        set(&mut base.iterations, t.iterations);
        set(&mut base.lr_start, t.lr_start);
        set(&mut base.lr_end, t.lr_end);
        set(&mut base.structure_lr_scale, t.structure_lr_scale);
        set(&mut base.lambda_eik, t.lambda_eik);
        set(&mut base.lambda_lap, t.lambda_lap);
        set(&mut base.seed, t.seed);
        set(&mut base.retrace_every, t.retrace_every);
        set(&mut base.reg_samples, t.reg_samples);
        set(&mut base.reg_step, t.reg_step);
        set(&mut base.seed, flags.seed);
        base.tracer = self.tracer(base.tracer.clone(), flags)?;
        Ok(base)
    }
}
