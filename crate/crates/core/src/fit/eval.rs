//! Held-out metrics and synthetic measurement generation.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::loss::FLOOR_DB;
use super::measure::{ChannelMeasurement, MeasuredValue, MeasurementKind, MeasurementSet};
use super::objective::{pin_paths, pinned_fields, radio_at};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scene::{Radio, RadioRole, Scene};
use crate::tracer::{predict_many, TracerConfig};

/// Reported SNR when predictions are exact or better than this.
pub const SNR_CAP_DB: f64 = 140.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// `|predicted dB - measured dB|` per record.
    pub errors_db: Vec<f64>,
    pub median_db: f64,
    pub p10_db: f64,
    pub p90_db: f64,
    /// Complex sets only.
    pub snr_db: Option<f64>,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `10 log10(sum |s|^2 / sum |s - pred|^2)` over every snapshot, capped.
pub fn snr_db(preds: &[Complex64], data: &MeasurementSet) -> Option<f64> {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (p, r) in preds.iter().zip(data.records()) {
        let MeasuredValue::Complex(s) = &r.value else { return None };
        for z in s {
            signal += z.norm_sqr();
            noise += (z - p).norm_sqr();
        }
    }
    let v = 10.0 * (signal / noise).log10();
    Some(if v.is_nan() || v > SNR_CAP_DB { SNR_CAP_DB } else { v })
}

pub fn metrics_from(preds: &[Complex64], data: &MeasurementSet) -> Result<Metrics> {
    if preds.len() != data.len() {
        return Err(Error::Shape(format!("{} predictions for {} records", preds.len(), data.len())));
    }
    let errors: Vec<f64> = preds
        .iter()
        .zip(data.records())
        .map(|(p, r)| ((10.0 * p.norm_sqr().log10()).max(FLOOR_DB) - r.power_db()).abs())
        .collect();
    Ok(metrics_from_errors(errors, snr_db(preds, data)))
}

fn metrics_from_errors(errors_db: Vec<f64>, snr_db: Option<f64>) -> Metrics {
    let mut sorted = errors_db.clone();
    sorted.sort_by(f64::total_cmp);
    Metrics {
        median_db: percentile(&sorted, 0.5),
        p10_db: percentile(&sorted, 0.1),
        p90_db: percentile(&sorted, 0.9),
        errors_db,
        snr_db,
    }
}

/// Predicted field for every record.
pub fn predict_measurements(scene: &Scene, data: &MeasurementSet, cfg: &TracerConfig) -> Result<Vec<Complex64>> {
    pinned_fields(&pin_paths(scene, data, cfg)?, data.len())
}

pub fn evaluate(scene: &Scene, held_out: &MeasurementSet, cfg: &TracerConfig) -> Result<Metrics> {
    if held_out.is_empty() {
        return Err(Error::EmptySamples);
    }
    metrics_from(&predict_measurements(scene, held_out, cfg)?, held_out)
}

/// Measurement noise added by [`synthesize`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noise {
    /// Standard deviation of additive dB noise (power) or of the relative
    /// complex error per snapshot.
    pub std: f64,
    pub snapshots: usize,
    pub seed: u64,
}

/// Measurements of `scene` from `tx` at each receiver position. Power
/// records never fall below [`FLOOR_DB`] before noise is added.
pub fn synthesize(
    scene: &Scene,
    tx: &Radio,
    rx_positions: &[Vec3],
    freq: f64,
    kind: MeasurementKind,
    cfg: &TracerConfig,
    noise: Option<Noise>,
) -> Result<MeasurementSet> {
    if rx_positions.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut s = scene.clone();
    s.frequencies = vec![freq];
    let rxs: Vec<Radio> = rx_positions.iter().map(|&p| radio_at(scene, RadioRole::Rx, p)).collect();
    let preds = predict_many(&s, tx, &rxs, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.map_or(0, |n| n.seed));
    let gauss = Normal::new(0.0, noise.map_or(0.0, |n| n.std).max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let records = rx_positions
        .iter()
        .zip(&preds)
        .map(|(&rx, p)| {
            let e = p.amplitudes[0];
            let value = match kind {
                MeasurementKind::PowerDb => MeasuredValue::PowerDb((10.0 * e.norm_sqr().log10()).max(FLOOR_DB) + gauss.sample(&mut rng)),
                MeasurementKind::Complex => {
                    let k = noise.map_or(1, |n| n.snapshots.max(1));
                    MeasuredValue::Complex(
                        (0..k)
                            .map(|_| e + Complex64::new(gauss.sample(&mut rng), gauss.sample(&mut rng)) * (e.norm() / 2f64.sqrt()))
                            .collect(),
                    )
                }
            };
            ChannelMeasurement { tx: tx.position, rx, freq, value }
        })
        .collect();
    MeasurementSet::new(records)
}
