//! Antenna amplitude weights over direction.

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Clone, Debug, PartialEq, Default)]
pub enum AntennaPattern {
    #[default]
    Isotropic,
    /// Gains on a regular (azimuth, elevation) grid in the antenna frame.
    /// Azimuth covers `[0, 360)` degrees and wraps; elevation covers
    /// `[-90, 90]` degrees inclusive. Row-major by elevation.
    Tabulated { step_deg: f64, gains: Vec<f64> },
}

impl AntennaPattern {
    pub fn grid_shape(step_deg: f64) -> Result<(usize, usize)> {
        let n_az = 360.0 / step_deg;
        let n_el = 180.0 / step_deg;
        if !(step_deg > 0.0) || (n_az - n_az.round()).abs() > 1e-9 || (n_el - n_el.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("antenna grid step {step_deg} must divide 180 degrees")));
        }
        Ok((n_az.round() as usize, n_el.round() as usize + 1))
    }

    pub fn tabulated(step_deg: f64, gains: Vec<f64>) -> Result<Self> {
        let (n_az, n_el) = Self::grid_shape(step_deg)?;
        if gains.len() != n_az * n_el {
            return Err(Error::Config(format!(
                "antenna grid needs {} x {} gains, got {}",
                n_el,
                n_az,
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::Config("antenna gains must be finite and non-negative".into()));
        }
        Ok(AntennaPattern::Tabulated { step_deg, gains })
    }

    /// Build a grid by sampling `f(azimuth_rad, elevation_rad)`.
    pub fn from_fn(step_deg: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (n_az, n_el) = Self::grid_shape(step_deg)?;
        let mut gains = Vec::with_capacity(n_az * n_el);
        for e in 0..n_el {
            let el = (-90.0 + e as f64 * step_deg).to_radians();
            for a in 0..n_az {
                gains.push(f((a as f64 * step_deg).to_radians(), el));
            }
        }
        Self::tabulated(step_deg, gains)
    }

    /// Weight along unit `dir` (antenna frame).
    pub fn weight(&self, dir: Vec3) -> f64 {
        match self {
            AntennaPattern::Isotropic => 1.0,
            AntennaPattern::Tabulated { step_deg, gains } => {
                let n_az = (360.0 / step_deg).round() as usize;
                let n_el = (180.0 / step_deg).round() as usize + 1;
                let el = dir.z.clamp(-1.0, 1.0).asin().to_degrees();
                let mut az = dir.y.atan2(dir.x).to_degrees();
                if az < 0.0 {
                    az += 360.0;
                }
                let fe = ((el + 90.0) / step_deg).clamp(0.0, (n_el - 1) as f64);
                let fa = az / step_deg;
                let e0 = (fe.floor() as usize).min(n_el - 2);
                let te = fe - e0 as f64;
                let a0 = fa.floor() as usize % n_az;
                let a1 = (a0 + 1) % n_az;
                let ta = fa - fa.floor();
                let g = |e: usize, a: usize| gains[e * n_az + a];
                let lo = g(e0, a0) * (1.0 - ta) + g(e0, a1) * ta;
                let hi = g(e0 + 1, a0) * (1.0 - ta) + g(e0 + 1, a1) * ta;
                lo * (1.0 - te) + hi * te
            }
        }
    }
}

/// Weight of `pattern` along unit `dir`, both in the antenna frame.
pub fn antenna_weight(pattern: &AntennaPattern, dir: Vec3) -> f64 {
    pattern.weight(dir)
}
