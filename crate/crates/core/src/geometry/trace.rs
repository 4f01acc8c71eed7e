//! Sphere tracing, root refinement and fixed-step interior marching.

use super::sdf::Field;
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub eps_hit: f64,
    pub max_iter: usize,
    /// Distance budget along the ray.
    pub max_dist: f64,
    /// Keep marching through near-misses and return the exact zero crossing
    /// instead of the first point with `|S| < eps_hit`.
    pub refine: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { eps_hit: 0.01, max_iter: 128, max_dist: 1e3, refine: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HitResult {
    pub hit: bool,
    pub t: f64,
    pub point: Vec3,
    pub iterations: usize,
    pub residual: f64,
    /// Steps that were clamped to `[eps_hit / 2, max_step]`.
    pub clamped: usize,
}

pub fn sphere_trace<F: Field>(field: &F, origin: Vec3, dir: Vec3, eps_hit: f64, max_iter: usize) -> Result<HitResult> {
    sphere_trace_with(field, origin, dir, &TraceOptions { eps_hit, max_iter, ..Default::default() })
}

pub fn sphere_trace_with<F: Field>(field: &F, origin: Vec3, dir: Vec3, opts: &TraceOptions) -> Result<HitResult> {
    let at = |t: f64| origin + dir * t;
    let mut s = field.dist(origin);
    if s < 0.0 {
        return Err(Error::StartsInside);
    }
    let mut t = 0.0;
    let mut iterations = 0;
    let mut clamped = 0;
    let max_step = field.max_step();
    let miss = |t: f64, s: f64, iterations, clamped| HitResult {
        hit: false,
        t,
        point: at(t),
        iterations,
        residual: s.abs(),
        clamped,
    };
    loop {
        if !opts.refine && s < opts.eps_hit {
            return Ok(HitResult { hit: true, t, point: at(t), iterations, residual: s.abs(), clamped });
        }
        if iterations >= opts.max_iter {
            return Ok(miss(t, s, iterations, clamped));
        }
        let mut step = s;
        if step < opts.eps_hit * 0.5 {
            step = opts.eps_hit * 0.5;
            clamped += 1;
        } else if step > max_step {
            step = max_step;
            clamped += 1;
        }
        let t_prev = t;
        let s_prev = s;
        t += step;
        if t > opts.max_dist {
            return Ok(miss(t_prev, s_prev, iterations, clamped));
        }
        s = field.dist(at(t));
        iterations += 1;
        if s < 0.0 {
            let tol = if opts.refine { 0.0 } else { opts.eps_hit };
            let (tr, sr) = find_root(field, origin, dir, (t_prev, s_prev), (t, s), tol);
            return Ok(HitResult { hit: true, t: tr, point: at(tr), iterations, residual: sr.abs(), clamped });
        }
    }
}

/// Illinois regula falsi on a sign-changing bracket. Stops once `|S| < tol`
/// (with `tol = 0` it runs to machine precision).
pub fn find_root<F: Field>(field: &F, origin: Vec3, dir: Vec3, a: (f64, f64), b: (f64, f64), tol: f64) -> (f64, f64) {
    let (mut ta, mut fa) = a;
    let (mut tb, mut fb) = b;
    let mut side = 0i8;
    for _ in 0..200 {
        if (tb - ta).abs() <= 1e-13 * (1.0 + ta.abs()) {
            break;
        }
        let mut tc = (ta * fb - tb * fa) / (fb - fa);
        if !(tc > ta.min(tb) && tc < ta.max(tb)) {
            tc = 0.5 * (ta + tb);
        }
        let fc = field.dist(origin + dir * tc);
        if fc == 0.0 || fc.abs() < tol {
            return (tc, fc);
        }
        if (fc > 0.0) == (fa > 0.0) {
            ta = tc;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            tb = tc;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    // Prefer the endpoint on the inside so callers land past the surface.
    let fbv = field.dist(origin + dir * tb);
    let fav = field.dist(origin + dir * ta);
    if fbv.abs() <= fav.abs() {
        (tb, fbv)
    } else {
        (ta, fav)
    }
}

/// Entry and exit parameters of a ray through a sphere, if it intersects.
pub fn ray_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<(f64, f64)> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    Some((-b - sq, -b + sq))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interior {
    pub exit: Vec3,
    pub chord: f64,
    /// Midpoints of `samples.len()` equal sub-segments of the chord.
    pub samples: Vec<Vec3>,
    /// Length of each sub-segment.
    pub seg: f64,
}

/// March through the medium from `entry` until the field turns non-negative.
pub fn interior_march<F: Field>(field: &F, entry: Vec3, dir: Vec3, step: f64) -> Result<Interior> {
    let budget = if field.max_step().is_finite() { 4.0 * field.max_step() } else { 100.0 };
    interior_march_within(field, entry, dir, step, budget)
}

pub fn interior_march_within<F: Field>(field: &F, entry: Vec3, dir: Vec3, step: f64, budget: f64) -> Result<Interior> {
    if !(step > 0.0) {
        return Err(Error::Config("interior step must be positive".into()));
    }
    let at = |t: f64| entry + dir * t;
    let mut neg: Option<(f64, f64)> = None;
    // Find a point strictly inside, even when the chord is shorter than `step`.
    let mut probe = step;
    while probe > 1e-9 {
        let s = field.dist(at(probe));
        if s < 0.0 {
            neg = Some((probe, s));
            break;
        }
        probe *= 0.5;
    }
    let (mut t_in, mut s_in) = match neg {
        Some(v) => v,
        None => return Ok(Interior { exit: entry, chord: 0.0, samples: Vec::new(), seg: 0.0 }),
    };
    loop {
        let t = t_in + step;
        if t > budget {
            return Err(Error::UnboundedInterior);
        }
        let s = field.dist(at(t));
        if s >= 0.0 {
            let (tr, _) = find_root(field, entry, dir, (t_in, s_in), (t, s), 0.0);
            let k = (tr / step).ceil().max(1.0) as usize;
            let seg = tr / k as f64;
            let samples = (0..k).map(|i| at((i as f64 + 0.5) * seg)).collect();
            return Ok(Interior { exit: at(tr), chord: tr, samples, seg });
        }
        t_in = t;
        s_in = s;
    }
}
