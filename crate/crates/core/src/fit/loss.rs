//! Per-measurement discrepancy and its derivative with respect to the
//! predicted phasor.

use num_complex::Complex64;

use super::measure::{mean_power, ChannelMeasurement, MeasuredValue};
use crate::error::{Error, Result};
use crate::tracer::ChannelPrediction;

/// Predictions weaker than this are scored as this, with zero slope.
pub const FLOOR_DB: f64 = -120.0;

/// Loss and `(dL/dRe E, dL/dIm E)` packed as a complex number.
pub fn loss_and_slope(pred: Complex64, meas: &ChannelMeasurement) -> (f64, Complex64) {
    match &meas.value {
        MeasuredValue::PowerDb(m) => {
            let p = pred.norm_sqr();
            let db = 10.0 * p.log10();
            if !(db > FLOOR_DB) {
                let e = FLOOR_DB - m;
                return (e * e, Complex64::new(0.0, 0.0));
            }
            let e = db - m;
            let dl_dp = 2.0 * e * 10.0 / (p * std::f64::consts::LN_10);
            (e * e, pred * (2.0 * dl_dp))
        }
        MeasuredValue::Complex(s) => {
            let norm = mean_power(s).max(f64::MIN_POSITIVE);
            let n = s.len() as f64;
            let l = s.iter().map(|z| (pred - z).norm_sqr()).sum::<f64>() / n / norm;
            let mean: Complex64 = s.iter().sum::<Complex64>() / n;
            (l, (pred - mean) * (2.0 / norm))
        }
    }
}

/// Loss of `pred` at the measurement's frequency.
pub fn loss(pred: &ChannelPrediction, meas: &ChannelMeasurement) -> Result<f64> {
    let i = pred
        .frequencies
        .iter()
        .position(|&f| (f - meas.freq).abs() <= 1e-9 * meas.freq)
        .ok_or_else(|| Error::Config(format!("prediction has no entry at {} Hz", meas.freq)))?;
    Ok(loss_and_slope(pred.amplitudes[i], meas).0)
}
