//! Eikonal and discrete-Laplacian penalties on a distance field.

use super::sdf::Field;
use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::math::{Vec3, V3};

/// Per-sample gradient norm and 7-point Laplacian, sharing the six probes.
fn probe<F: Field, R: Real>(field: &F, p: V3<R>, h: f64) -> (R, R) {
    let center = field.eval(p);
    let mut grad_sq: Option<R> = None;
    let mut lap = center * -6.0;
    for i in 0..3 {
        let e = Vec3::axis(i) * h;
        let hi = field.eval(p.add_f(e));
        let lo = field.eval(p.sub_f(e));
        let g = (hi - lo) / (2.0 * h);
        grad_sq = Some(match grad_sq {
            None => g * g,
            Some(a) => a + g * g,
        });
        lap = lap + hi + lo;
    }
    let gnorm = (grad_sq.expect("three axes") + 1e-18).sqrt();
    (gnorm, lap / (h * h))
}

/// Mean of `(|grad S| - 1)^2`.
pub fn eikonal_residual<F: Field, R: Real>(field: &F, samples: &[V3<R>], h: f64) -> Result<R> {
    Ok(regularizers(field, samples, h)?.0)
}

/// Mean squared 7-point Laplacian.
pub fn laplacian_residual<F: Field, R: Real>(field: &F, samples: &[V3<R>], h: f64) -> Result<R> {
    Ok(regularizers(field, samples, h)?.1)
}

/// Both penalties from one set of probes: `(eikonal, laplacian)`.
pub fn regularizers<F: Field, R: Real>(field: &F, samples: &[V3<R>], h: f64) -> Result<(R, R)> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let mut eik = first.x.lift(0.0);
    let mut lap = first.x.lift(0.0);
    for p in samples {
        let (g, l) = probe(field, *p, h);
        let d = g - 1.0;
        eik = eik + d * d;
        lap = lap + l * l;
    }
    let n = samples.len() as f64;
    Ok((eik / n, lap / n))
}

/// Mean of `| |grad S| - 1 |` over `samples`.
pub fn mean_abs_eikonal<F: Field>(field: &F, samples: &[Vec3], h: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let total: f64 = samples.iter().map(|p| (probe(field, *p, h).0 - 1.0).abs()).sum();
    Ok(total / samples.len() as f64)
}
