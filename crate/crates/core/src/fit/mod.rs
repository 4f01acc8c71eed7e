//! Fitting primitives to channel measurements, pose adaptation and
//! held-out evaluation.

mod eval;
#[cfg(test)]
mod fixtures;
mod loss;
mod measure;
mod objective;
mod train;

pub use eval::{evaluate, metrics_from, percentile, predict_measurements, snr_db, synthesize, Metrics, Noise, SNR_CAP_DB};
pub use loss::{loss, loss_and_slope, FLOOR_DB};
pub use measure::{ChannelMeasurement, MeasuredValue, MeasurementKind, MeasurementSet, CSV_HEADER};
pub use objective::{
    draw_reg_samples, near_surface_samples, pin_paths, pinned_fields, radio_at, total_objective, Objective, Pinned, PinnedGroup,
    RegSamples, TrainConfig, Wrt,
};
pub use train::{adapt_poses, network_digests, train_primitives, FitReport};
