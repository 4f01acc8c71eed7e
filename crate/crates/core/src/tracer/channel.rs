//! Coherent channel synthesis from traced paths.

use num_complex::Complex64;

use super::engine::trace_paths;
use super::{Arrival, PathRecord, TracerConfig, C};
use crate::error::{Error, Result};
use crate::math::{pairwise_sum, Vec3};
use crate::scene::{Radio, Scene};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPrediction {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// Ray contributions that reached the receiver (first frequency).
    pub path_count: usize,
    /// Contributing paths, when `keep_paths` is set.
    pub paths: Vec<PathRecord>,
}

impl ChannelPrediction {
    /// `20 log10 |amplitude|` at the first frequency; `-inf` without paths.
    pub fn power_db(&self) -> f64 {
        power_db(self.amplitudes[0])
    }
}

pub fn power_db(a: Complex64) -> f64 {
    20.0 * a.norm().log10()
}

/// Everything in the received phasor except the neural factor.
pub fn arrival_base(path: &PathRecord, arrival: &Arrival, freq: f64, tx_amplitude: f64) -> Result<Complex64> {
    if !(arrival.tau > 0.0) {
        return Err(Error::ZeroLengthPath);
    }
    let mag = tx_amplitude * path.launch_gain * arrival.gain * path.weight * arrival.capture / arrival.tau;
    let phase = -2.0 * std::f64::consts::PI * freq * arrival.tau / C;
    Ok(path.analytic * Complex64::from_polar(mag, phase))
}

/// Received phasor of one path at one of its arrivals:
/// `E0 * a * weight / tau * exp(-j 2 pi f tau / c)`, with antenna gains and
/// the capture weight folded into the amplitude.
pub fn path_signal(path: &PathRecord, arrival: &Arrival, freq: f64, tx_amplitude: f64) -> Result<Complex64> {
    Ok(arrival_base(path, arrival, freq, tx_amplitude)? * path.neural)
}

fn check_inside(scene: &Scene, r: &Radio) -> Result<()> {
    if !scene.bounds.contains(r.position) {
        return Err(Error::Config(format!("radio '{}' is outside the scene bounds", r.id)));
    }
    Ok(())
}

/// Predictions for many receivers from one shared trace per frequency.
pub fn predict_many(scene: &Scene, tx: &Radio, rxs: &[Radio], cfg: &TracerConfig) -> Result<Vec<ChannelPrediction>> {
    check_inside(scene, tx)?;
    for rx in rxs {
        check_inside(scene, rx)?;
    }
    let nf = scene.frequencies.len();
    let mut out: Vec<ChannelPrediction> = rxs
        .iter()
        .map(|_| ChannelPrediction {
            frequencies: scene.frequencies.clone(),
            amplitudes: vec![Complex64::new(0.0, 0.0); nf],
            path_count: 0,
            paths: Vec::new(),
        })
        .collect();
    for (fi, &f) in scene.frequencies.iter().enumerate() {
        // (receiver index, trace output) pairs; backward tracing launches
        // from each receiver towards the transmitter.
        let traces = if cfg.backward {
            rxs.iter()
                .enumerate()
                .map(|(j, rx)| Ok((Some(j), trace_paths(scene, rx, std::slice::from_ref(tx), f, cfg)?)))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![(None, trace_paths(scene, tx, rxs, f, cfg)?)]
        };
        let mut terms: Vec<Vec<Complex64>> = vec![Vec::new(); rxs.len()];
        for (fixed_rx, trace) in traces {
            for p in &trace.paths {
                for a in &p.arrivals {
                    let j = fixed_rx.unwrap_or(a.rx);
                    terms[j].push(path_signal(p, a, f, tx.amplitude)?);
                    if fi == 0 && cfg.keep_paths {
                        let mut single = p.clone();
                        single.arrivals = vec![Arrival { rx: j, ..*a }];
                        out[j].paths.push(single);
                    }
                }
            }
        }
        for (j, t) in terms.iter().enumerate() {
            out[j].amplitudes[fi] = pairwise_sum(t);
            if fi == 0 {
                out[j].path_count = t.len();
            }
        }
    }
    Ok(out)
}

pub fn predict_channel(scene: &Scene, tx: &Radio, rx: &Radio, cfg: &TracerConfig) -> Result<ChannelPrediction> {
    Ok(predict_many(scene, tx, std::slice::from_ref(rx), cfg)?.remove(0))
}

/// Horizontal lattice of receiver positions: `origin + (i * cell, j * cell, 0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageGrid {
    pub origin: Vec3,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CoverageGrid {
    pub fn positions(&self) -> Vec<Vec3> {
        let mut v = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                v.push(self.origin + Vec3::new(i as f64 * self.cell, j as f64 * self.cell, 0.0));
            }
        }
        v
    }
}

/// Power (dB) per grid cell, row-major from `origin`.
pub fn coverage_map(scene: &Scene, tx: &Radio, grid: &CoverageGrid, cfg: &TracerConfig) -> Result<Vec<f64>> {
    if grid.nx == 0 || grid.ny == 0 || !(grid.cell > 0.0) {
        return Err(Error::Config("grid needs at least one cell and a positive cell size".into()));
    }
    let rxs: Vec<Radio> = grid
        .positions()
        .into_iter()
        .enumerate()
        .map(|(k, p)| Radio::rx(&format!("cell{k}"), p))
        .collect();
    Ok(predict_many(scene, tx, &rxs, cfg)?.iter().map(|p| p.power_db()).collect())
}
