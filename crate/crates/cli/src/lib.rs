//! Command-line front end: scene simulation, synthetic datasets, training,
//! pose adaptation, evaluation, coverage heatmaps and the mesh oracle.

mod args;
mod commands;
mod config;
mod heatmap;

use std::fmt;
use std::io::Write;

pub use args::{Cli, Command, DataKind, TracerFlags};
pub use config::{RunConfig, TracerSection, TrainSection};
pub use heatmap::HeatmapGrid;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or references; exit code 2.
    Usage(String),
    /// Everything else; exit code 1.
    Runtime(rfprim::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rfprim::Error> for CliError {
    fn from(e: rfprim::Error) -> Self {
        match e {
            rfprim::Error::UnknownRadio(_) | rfprim::Error::UnknownPrimitive(_) => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Execute `cli`, writing the report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    commands::dispatch(&cli.command, out)
}
