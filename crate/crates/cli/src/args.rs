use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug, Clone)]
#[command(name = "rfprim", version, about = "Differentiable RF propagation with neural object primitives")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Tracer settings shared by every command that traces.
#[derive(Args, Debug, Clone, Default)]
pub struct TracerFlags {
    /// TOML file with optional [tracer] and [train] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for the launch lattice and any sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rays per trace.
    #[arg(long)]
    pub rays: Option<usize>,
    /// Surface interactions per ray (bounces for the oracle).
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Power,
    Complex,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Predict the channel between two radios of a scene.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        /// Transmitter id in the scene.
        #[arg(long)]
        tx: String,
        /// Receiver id in the scene.
        #[arg(long)]
        rx: String,
        /// List every contributing path.
        #[arg(long)]
        paths: bool,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Sample receivers in the scene bounds and record their predictions.
    GenSynthetic {
        #[arg(long)]
        scene: PathBuf,
        /// Transmitter id in the scene.
        #[arg(long)]
        tx: String,
        /// Number of records.
        #[arg(long, allow_hyphen_values = true)]
        n: i64,
        #[arg(long)]
        out: PathBuf,
        /// Noise level: std in dB for power data; for complex data the
        /// relative snapshot noise is `10^(sigma/20) - 1`.
        #[arg(long, default_value_t = 0.0)]
        noise_db: f64,
        #[arg(long, value_enum, default_value_t = DataKind::Power)]
        kind: DataKind,
        /// Number of snapshots per complex record.
        #[arg(long, default_value_t = 1)]
        snapshots: usize,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Fit the neural primitives of a scene to a dataset.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Output scene file; the fitted library is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Initial learning rate; the schedule ends at a tenth of it.
        #[arg(long)]
        lr: Option<f64>,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Re-estimate the poses of dynamic primitives with networks frozen.
    Adapt {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Scene with known poses; translation errors are reported against it.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Error statistics of a scene's predictions on a dataset.
    Evaluate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Received power over a horizontal grid.
    Heatmap {
        #[arg(long)]
        scene: PathBuf,
        /// Transmitter id in the scene.
        #[arg(long)]
        tx: String,
        /// Cell counts as `NXxNY`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        cell: f64,
        /// Grid corner as `x,y,z`.
        #[arg(long, allow_hyphen_values = true)]
        origin: String,
        /// CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional 8-bit graymap output.
        #[arg(long)]
        pgm: Option<PathBuf>,
        /// Power mapped to black in the graymap.
        #[arg(long, default_value_t = -120.0, allow_hyphen_values = true)]
        floor_db: f64,
        #[command(flatten)]
        tracer: TracerFlags,
    },
    /// Image-method prediction on a triangle mesh.
    Oracle {
        /// Wavefront OBJ file; `usemtl` names select materials.
        #[arg(long)]
        mesh: PathBuf,
        /// Transmitter position `x,y,z`.
        #[arg(long, allow_hyphen_values = true)]
        tx: String,
        /// Receiver position `x,y,z`.
        #[arg(long, allow_hyphen_values = true)]
        rx: String,
        /// Carrier frequency (Hz).
        #[arg(long, default_value_t = 2.4e9)]
        freq: f64,
        /// Extra material definitions (TOML).
        #[arg(long)]
        materials: Option<PathBuf>,
        /// Neural scene to compare against at the same positions.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[command(flatten)]
        tracer: TracerFlags,
    },
}
