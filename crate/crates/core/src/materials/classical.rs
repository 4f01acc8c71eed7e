//! Permittivity, wave impedance and the perpendicular Fresnel coefficient.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Permittivity of free space (F/m)
pub const EPS0: f64 = 8.854_187_812_8e-12;

/// Impedance of free space (Ohm)
pub const ETA0: f64 = 376.730;

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct ClassicalMaterial {
    pub eps_r: f64,
    pub sigma: f64,
}

impl ClassicalMaterial {
    pub fn new(eps_r: f64, sigma: f64) -> Result<Self> {
        let m = Self { eps_r, sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 1.0) || !(self.sigma >= 0.0) || !self.eps_r.is_finite() || !self.sigma.is_finite() {
            return Err(Error::Config(format!(
                "material needs eps_r >= 1 and sigma >= 0 (got {}, {})",
                self.eps_r, self.sigma
            )));
        }
        Ok(())
    }

    /// Refractive index used for Snell's law.
    pub fn refractive_index(&self) -> f64 {
        self.eps_r.sqrt()
    }

    /// `R_perp` for a wave arriving from free space at incidence `theta_i`.
    pub fn r_perp_from_air(&self, f: f64, theta_i: f64) -> Complex64 {
        let eta2 = wave_impedance(complex_permittivity(self, f));
        fresnel_r_perp(Complex64::new(ETA0, 0.0), eta2, theta_i, 1.0, self.refractive_index())
    }
}

/// Relative complex permittivity `eps_r - j sigma / (omega eps0)`.
pub fn complex_permittivity(mat: &ClassicalMaterial, f: f64) -> Complex64 {
    let omega = 2.0 * PI * f;
    Complex64::new(mat.eps_r, -mat.sigma / (omega * EPS0))
}

/// `eta0 / sqrt(eps_c)` for a non-magnetic medium.
pub fn wave_impedance(eps_c: Complex64) -> Complex64 {
    Complex64::new(ETA0, 0.0) / eps_c.sqrt()
}

/// Reflection coefficient for perpendicular polarization.
pub fn fresnel_r_perp(eta1: Complex64, eta2: Complex64, theta_i: f64, n1: f64, n2: f64) -> Complex64 {
    let sin_t = n1 / n2 * theta_i.sin();
    // Past the critical angle cos(theta_t) turns imaginary.
    let cos_t = Complex64::new(1.0 - sin_t * sin_t, 0.0).sqrt();
    let cos_i = theta_i.cos();
    (eta2 * cos_i - eta1 * cos_t) / (eta2 * cos_i + eta1 * cos_t)
}

/// Name to material lookup with built-in defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable {
    entries: BTreeMap<String, ClassicalMaterial>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        entries.insert("concrete".to_string(), ClassicalMaterial { eps_r: 5.31, sigma: 0.066 });
        entries.insert("wood".to_string(), ClassicalMaterial { eps_r: 1.99, sigma: 0.012 });
        entries.insert("glass".to_string(), ClassicalMaterial { eps_r: 6.27, sigma: 0.023 });
        Self { entries }
    }
}

impl MaterialTable {
    pub fn get(&self, name: &str) -> Result<ClassicalMaterial> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown material '{name}'")))
    }

    pub fn insert(&mut self, name: &str, mat: ClassicalMaterial) -> Result<()> {
        mat.validate()?;
        self.entries.insert(name.to_string(), mat);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    /// Defaults overridden by TOML tables of the form
    /// `[name]` with `eps_r` and `sigma` keys.
    pub fn from_toml(text: &str) -> Result<Self> {
        let parsed: BTreeMap<String, ClassicalMaterial> =
            toml::from_str(text).map_err(|e| Error::Format(format!("material table: {e}")))?;
        let mut t = Self::default();
        for (name, m) in parsed {
            t.insert(&name, m)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lossless_permittivity_is_real() {
        let m = ClassicalMaterial::new(4.0, 0.0).unwrap();
        for f in [1e6, 2.4e9, 60e9] {
            assert_eq!(complex_permittivity(&m, f), Complex64::new(4.0, 0.0));
        }
    }

    #[test]
    fn lossy_permittivity_at_2_4_ghz() {
        let m = ClassicalMaterial::new(4.0, 0.05).unwrap();
        let e = complex_permittivity(&m, 2.4e9);
        let expect = -0.05 / (2.0 * PI * 2.4e9 * 8.8541878128e-12);
        assert!((e.im - expect).abs() < 1e-12);
        assert!((e.im + 0.374).abs() < 1e-3);
    }

    #[test]
    fn loss_term_vanishes_with_frequency() {
        let m = ClassicalMaterial::new(4.0, 0.05).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let im = complex_permittivity(&m, 1e6 * 10f64.powi(k)).im.abs();
            assert!(im < prev);
            prev = im;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn impedances() {
        assert!((wave_impedance(Complex64::new(1.0, 0.0)) - ETA0).norm() < 1e-12);
        assert!((wave_impedance(Complex64::new(4.0, 0.0)) - ETA0 / 2.0).norm() < 1e-12);
    }

    #[test]
    fn lossy_impedance_matches_polar_oracle() {
        for (er, im) in [(4.0, -0.374), (5.31, -0.5), (2.0, -3.0)] {
            let eps = Complex64::new(er, im);
            let eta = wave_impedance(eps);
            // sqrt in polar form, computed independently
            let r: f64 = (er * er + im * im).sqrt();
            let phi = im.atan2(er);
            let (sr, sphi) = (r.sqrt(), phi / 2.0);
            let denom = sr * sr;
            let oracle = Complex64::new(ETA0 * sr * sphi.cos() / denom, -ETA0 * sr * sphi.sin() / denom);
            assert!((eta - oracle).norm() < 1e-9);
            assert!(eta.norm() < ETA0 / er.sqrt());
        }
    }

    #[test]
    fn matched_media_do_not_reflect() {
        let eta = Complex64::new(200.0, -10.0);
        for th in [0.0, 0.3, 1.0, 1.5] {
            assert!(fresnel_r_perp(eta, eta, th, 1.5, 1.5).norm() < 1e-12);
        }
    }

    #[test]
    fn normal_incidence_into_eps_4() {
        let r = fresnel_r_perp(Complex64::new(ETA0, 0.0), Complex64::new(ETA0 / 2.0, 0.0), 0.0, 1.0, 2.0);
        assert!((r - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn lossless_energy_bookkeeping() {
        let m = ClassicalMaterial::new(5.0, 0.0).unwrap();
        for th in [0.0f64, 0.4, 0.9, 1.3] {
            let r = m.r_perp_from_air(1e9, th).norm_sqr();
            let t = 1.0 - r;
            assert!((r + t - 1.0).abs() < 1e-15);
            assert!(t > 0.0);
        }
    }

    #[test]
    fn total_internal_reflection_is_lossless() {
        let r = fresnel_r_perp(Complex64::new(ETA0 / 2.0, 0.0), Complex64::new(ETA0, 0.0), 1.2, 2.0, 1.0);
        assert!((r.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_defaults_and_overrides() {
        let t = MaterialTable::default();
        assert_eq!(t.get("concrete").unwrap(), ClassicalMaterial { eps_r: 5.31, sigma: 0.066 });
        assert!(t.get("unobtainium").is_err());
        let t = MaterialTable::from_toml("[concrete]\neps_r = 6.0\nsigma = 0.1\n[metalish]\neps_r = 1.0\nsigma = 1e7\n").unwrap();
        assert_eq!(t.get("concrete").unwrap().eps_r, 6.0);
        assert_eq!(t.get("wood").unwrap().eps_r, 1.99);
        assert!(t.get("metalish").is_ok());
        assert!(MaterialTable::from_toml("[bad]\neps_r = 0.5\nsigma = 0.0\n").is_err());
    }

    proptest! {
        #[test]
        fn passive_media_never_amplify(er in 1.0f64..10.0, sigma in 0.0f64..1.0, deg in 0.0f64..89.0, f in 1e8f64..1e11) {
            let m = ClassicalMaterial::new(er, sigma).unwrap();
            prop_assert!(m.r_perp_from_air(f, deg.to_radians()).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn grazing_incidence_reflects_fully(er in 1.5f64..10.0, sigma in 0.0f64..1.0) {
            let m = ClassicalMaterial::new(er, sigma).unwrap();
            let near = m.r_perp_from_air(2.4e9, (90.0f64 - 1e-4).to_radians()).norm();
            prop_assert!(near > 0.999);
        }
    }
}
