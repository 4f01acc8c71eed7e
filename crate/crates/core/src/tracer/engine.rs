//! Per-ray tracing: nearest hit, surface interaction, receiver capture.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::launch::{launch_directions, reflect_dir};
use super::{Arrival, Branch, BranchMode, Event, LocalHit, PathRecord, SurfaceEvent, TracerConfig};
use crate::error::{Error, Result};
use crate::geometry::{fd_gradient, interior_march_within, ray_sphere, sphere_trace_with, Field, HitResult, TraceOptions};
use crate::materials::{interior_attenuation, material_response, InteractionQuery, InteriorSample};
use crate::math::Vec3;
use crate::scene::{Payload, PlacedPrimitive, Radio, Scene, SurfaceModel};

/// Offset applied to new ray origins so they start clear of the surface.
const NUDGE: f64 = 1e-6;

/// Capture kernel exponent.
const KERNEL_POWER: i32 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct RaySample {
    pub origin: Vec3,
    pub dir: Vec3,
    /// Distance travelled before `origin`.
    pub tau: f64,
    pub analytic: Complex64,
    pub neural: f64,
    pub weight: f64,
    pub gain: f64,
    pub depth: usize,
    pub events: Vec<Event>,
    pub segments: Vec<f64>,
}

impl RaySample {
    pub fn new(origin: Vec3, dir: Vec3, gain: f64) -> Self {
        Self {
            origin,
            dir,
            tau: 0.0,
            analytic: Complex64::new(1.0, 0.0),
            neural: 1.0,
            weight: 1.0,
            gain,
            depth: 0,
            events: vec![Event::Launch { origin, dir, gain }],
            segments: Vec::new(),
        }
    }

    /// `|a| * weight`
    pub fn throughput(&self) -> f64 {
        self.analytic.norm() * self.neural * self.weight
    }
}

pub enum Interaction {
    Absorbed,
    Continue(Vec<RaySample>),
}

/// `P(reflect) = a_r / (a_r + a_t)`, or `None` when both vanish.
pub fn branch_probability(a_r: f64, a_t: f64) -> Option<f64> {
    let s = a_r + a_t;
    (s >= 1e-9).then(|| a_r / s)
}

#[derive(Clone, Debug, Default)]
pub struct TraceOutput {
    pub paths: Vec<PathRecord>,
    pub rays: usize,
    /// Rays stopped by numerical trouble (starting inside, degenerate normal).
    pub terminated: usize,
    /// Neural surface points hit, as (primitive, local position).
    pub neural_hits: Vec<(usize, Vec3)>,
}

struct Surface {
    normal: Vec3,
    slope: f64,
    features: Vec<f64>,
    neural: bool,
}

fn surface_at(prim: &PlacedPrimitive, p: Vec3, d: Vec3, eps_fd: f64) -> Option<Surface> {
    let (g, features, neural) = match &prim.payload {
        Payload::Neural(np) => {
            let f = np.structure.field(None);
            (fd_gradient(&f, p, eps_fd), f.eval_full(p).1, true)
        }
        Payload::Analytic { sdf, .. } => (fd_gradient(sdf, p, eps_fd), Vec::new(), false),
    };
    let n = g.norm();
    if !(n > 1e-12) {
        return None;
    }
    Some(Surface { normal: g * (1.0 / n), slope: g.dot(d), features, neural })
}

fn classical_coefs(model: &SurfaceModel, freq: f64, cos_i: f64) -> Option<(Complex64, Complex64)> {
    match model {
        SurfaceModel::Absorber => None,
        SurfaceModel::Mirror(c) => Some((*c, Complex64::new(0.0, 0.0))),
        SurfaceModel::Classical(m) => {
            let r = m.r_perp_from_air(freq, cos_i.abs().min(1.0).acos());
            Some((r, Complex64::new((1.0 - r.norm_sqr()).max(0.0).sqrt(), 0.0)))
        }
    }
}

/// Interior march limit: chords cannot exceed the bounding diameter.
fn interior_budget(prim: &PlacedPrimitive, step: f64) -> Option<f64> {
    match &prim.payload {
        Payload::Neural(np) => Some(2.0 * np.structure.radius + step),
        Payload::Analytic { sdf, .. } => sdf.bounding_radius().map(|r| 2.0 * r + step),
    }
}

fn push_coef(s: &mut RaySample, c: Complex64, neural: bool) {
    if neural {
        s.neural *= c.re;
    } else {
        s.analytic *= c;
    }
}

/// Handle a hit of `sample` on primitive `prim_index`; `hit` is in the
/// primitive's frame.
pub fn interact<G: Rng + ?Sized>(
    scene: &Scene,
    sample: &RaySample,
    prim_index: usize,
    hit: &HitResult,
    freq: f64,
    cfg: &TracerConfig,
    rng: &mut G,
) -> Result<Interaction> {
    let prim = &scene.primitives[prim_index];
    let pose = &prim.pose;
    let ld = pose.rotation.inverse_rotate(sample.dir);
    let pl = hit.point;
    let pw = pose.point_to_world(pl);
    let Some(surf) = surface_at(prim, pl, ld, cfg.eps_fd) else {
        return Err(Error::DegenerateNormal);
    };
    let (c_r, c_t) = match &prim.payload {
        Payload::Neural(np) => {
            let q = |out: Vec3| InteractionQuery {
                p: pl,
                normal: surf.normal,
                incoming: ld,
                outgoing: out,
                freq_hz: freq,
                features: surf.features.clone(),
            };
            let a_r = material_response(&np.material, None, &q(reflect_dir(ld, surf.normal)))?;
            let a_t = material_response(&np.material, None, &q(ld))?;
            (Complex64::new(a_r, 0.0), Complex64::new(a_t, 0.0))
        }
        Payload::Analytic { surface, .. } => match classical_coefs(surface, freq, ld.dot(surf.normal)) {
            Some(c) => c,
            None => return Ok(Interaction::Absorbed),
        },
    };
    let Some(p_r) = branch_probability(c_r.norm(), c_t.norm()) else {
        return Ok(Interaction::Absorbed);
    };
    let mut take = [false, false];
    match cfg.mode {
        BranchMode::Split => take = [c_r.norm() > 0.0, c_t.norm() > 0.0],
        BranchMode::MonteCarlo => {
            let u: f64 = rng.random();
            take[if u < p_r { 0 } else { 1 }] = true;
        }
    }
    let prob = |reflect: bool| match cfg.mode {
        BranchMode::Split => 1.0,
        BranchMode::MonteCarlo if reflect => p_r,
        BranchMode::MonteCarlo => 1.0 - p_r,
    };
    let n_w = pose.rotation.rotate(surf.normal);
    let local = surf.neural.then_some(LocalHit { normal: surf.normal, slope: surf.slope });
    let event = |branch: Branch, coef: Complex64, prob: f64| SurfaceEvent {
        prim: prim_index,
        origin: sample.origin,
        dir: sample.dir,
        t: hit.t,
        point: pw,
        normal: n_w,
        branch,
        coef,
        prob,
        local,
    };
    let mut out = Vec::new();
    if take[0] {
        let p = prob(true);
        let mut s = sample.clone();
        s.events.push(Event::Surface(event(Branch::Reflect, c_r, p)));
        push_coef(&mut s, c_r, surf.neural);
        s.weight /= p;
        s.tau += hit.t;
        s.segments.push(hit.t);
        s.depth += 1;
        s.dir = reflect_dir(sample.dir, n_w);
        s.origin = pw + n_w * NUDGE;
        out.push(s);
    }
    if take[1] {
        if let Some(s) = penetrate(prim, prim_index, sample, hit, &surf, c_t, prob(false), event(Branch::Penetrate, c_t, prob(false)), freq, cfg)? {
            out.push(s);
        }
    }
    let mut kept = Vec::with_capacity(out.len());
    for mut s in out {
        if cfg.roulette > 0.0 {
            let th = s.throughput();
            if th < cfg.roulette {
                let survive = th / cfg.roulette;
                if rng.random::<f64>() >= survive {
                    continue;
                }
                s.weight /= survive;
            }
        }
        kept.push(s);
    }
    Ok(Interaction::Continue(kept))
}

#[allow(clippy::too_many_arguments)]
fn penetrate(
    prim: &PlacedPrimitive,
    prim_index: usize,
    sample: &RaySample,
    hit: &HitResult,
    entry: &Surface,
    c_t: Complex64,
    prob: f64,
    entry_event: SurfaceEvent,
    freq: f64,
    cfg: &TracerConfig,
) -> Result<Option<RaySample>> {
    let pose = &prim.pose;
    let ld = pose.rotation.inverse_rotate(sample.dir);
    let Some(budget) = interior_budget(prim, cfg.interior_step) else {
        return Ok(None);
    };
    let interior = match &prim.payload {
        Payload::Neural(np) => interior_march_within(&np.structure.field(None), hit.point, ld, cfg.interior_step, budget),
        Payload::Analytic { sdf, .. } => interior_march_within(sdf, hit.point, ld, cfg.interior_step, budget),
    };
    let interior = match interior {
        Ok(i) => i,
        Err(Error::UnboundedInterior) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Some(exit) = surface_at(prim, interior.exit, ld, cfg.eps_fd) else {
        return Ok(None);
    };
    let (factor, c_e) = match &prim.payload {
        Payload::Neural(np) => {
            let f = np.structure.field(None);
            let samples: Vec<InteriorSample<f64>> =
                interior.samples.iter().map(|&p| InteriorSample { p, features: f.eval_full(p).1 }).collect();
            let factor = interior_attenuation(&np.material, None, &samples, ld, freq, interior.seg)?;
            let q = InteractionQuery {
                p: interior.exit,
                normal: exit.normal,
                incoming: ld,
                outgoing: ld,
                freq_hz: freq,
                features: exit.features.clone(),
            };
            (factor, Complex64::new(material_response(&np.material, None, &q)?, 0.0))
        }
        Payload::Analytic { surface, .. } => match classical_coefs(surface, freq, ld.dot(exit.normal)) {
            Some((_, t)) => (1.0, t),
            None => return Ok(None),
        },
    };
    let pw = entry_event.point;
    let exit_w = pose.point_to_world(interior.exit);
    let mut s = sample.clone();
    s.events.push(Event::Surface(entry_event));
    s.events.push(Event::Interior { prim: prim_index, chord: interior.chord, factor, samples: interior.samples.len() });
    s.events.push(Event::Surface(SurfaceEvent {
        prim: prim_index,
        origin: pw,
        dir: sample.dir,
        t: interior.chord,
        point: exit_w,
        normal: pose.rotation.rotate(exit.normal),
        branch: Branch::Exit,
        coef: c_e,
        prob: 1.0,
        local: entry.neural.then_some(LocalHit { normal: exit.normal, slope: exit.slope }),
    }));
    push_coef(&mut s, c_t, entry.neural);
    push_coef(&mut s, Complex64::new(factor, 0.0), entry.neural);
    push_coef(&mut s, c_e, entry.neural);
    s.weight /= prob;
    s.tau += hit.t + interior.chord;
    s.segments.push(hit.t);
    s.segments.push(interior.chord);
    s.depth += 1;
    s.origin = exit_w + sample.dir * NUDGE;
    Ok(Some(s))
}

/// Closest surface along the ray within `max_t`, as (primitive, world-t hit
/// with a local-frame point).
fn nearest_hit(scene: &Scene, o: Vec3, d: Vec3, max_t: f64, cfg: &TracerConfig) -> Result<Option<(usize, HitResult)>> {
    let mut best_t = max_t;
    let mut best = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        let mut t_lo = 0.0;
        let mut t_hi = best_t;
        if let Some((c, r)) = p.world_bound() {
            match ray_sphere(o, d, c, r) {
                Some((t0, t1)) if t1 >= 0.0 && t0 <= best_t => {
                    t_lo = (t0 - NUDGE).max(0.0);
                    t_hi = t_hi.min(t1);
                }
                _ => continue,
            }
        }
        let (lo, ld) = p.pose.world_to_object(o, d);
        let start = lo + ld * t_lo;
        let opts = TraceOptions { eps_hit: cfg.eps_hit, max_iter: cfg.max_iter, max_dist: t_hi - t_lo, refine: true };
        let h = match &p.payload {
            Payload::Neural(np) => sphere_trace_with(&np.structure.field(None), start, ld, &opts)?,
            Payload::Analytic { sdf, .. } => sphere_trace_with(sdf, start, ld, &opts)?,
        };
        if h.hit && t_lo + h.t < best_t {
            best_t = t_lo + h.t;
            best = Some((i, HitResult { t: best_t, ..h }));
        }
    }
    Ok(best)
}

fn capture(s: &RaySample, len: f64, targets: &[Radio], cfg: &TracerConfig, n_rays: usize) -> Vec<Arrival> {
    let r2 = cfg.capture_radius * cfg.capture_radius;
    let mut out = Vec::new();
    for (j, rx) in targets.iter().enumerate() {
        let v = rx.position - s.origin;
        let sj = v.dot(s.dir);
        if sj <= 0.0 || sj >= len {
            continue;
        }
        let b2 = (v.norm_sq() - sj * sj).max(0.0);
        if b2 >= r2 {
            continue;
        }
        let kernel = (KERNEL_POWER + 1) as f64 / (std::f64::consts::PI * r2) * (1.0 - b2 / r2).powi(KERNEL_POWER);
        let reach = s.tau + sj;
        let tau = (reach * reach + b2).sqrt();
        let capture = kernel * tau * reach * 4.0 * std::f64::consts::PI / n_rays as f64;
        out.push(Arrival { rx: j, s: sj, miss: b2.sqrt(), tau, capture, gain: rx.gain(-s.dir) });
    }
    out
}

#[derive(Default)]
struct RayOut {
    paths: Vec<PathRecord>,
    terminated: usize,
    hits: Vec<(usize, Vec3)>,
}

fn trace_ray(scene: &Scene, index: usize, start: RaySample, targets: &[Radio], freq: f64, cfg: &TracerConfig) -> RayOut {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let mut out = RayOut::default();
    let mut stack = vec![start];
    while let Some(s) = stack.pop() {
        if !scene.bounds.contains(s.origin) {
            continue;
        }
        let bound_t = scene.bounds.exit_distance(s.origin, s.dir);
        let hit = match nearest_hit(scene, s.origin, s.dir, bound_t, cfg) {
            Ok(h) => h,
            Err(_) => {
                out.terminated += 1;
                continue;
            }
        };
        let seg_end = hit.as_ref().map_or(bound_t, |(_, h)| h.t);
        let arrivals = capture(&s, seg_end, targets, cfg, cfg.rays);
        if !arrivals.is_empty() {
            out.paths.push(PathRecord {
                ray: index,
                events: s.events.clone(),
                segments: s.segments.clone(),
                analytic: s.analytic,
                neural: s.neural,
                weight: s.weight,
                launch_gain: s.gain,
                arrivals,
            });
        }
        let Some((prim, h)) = hit else { continue };
        if matches!(scene.primitives[prim].payload, Payload::Neural(_)) {
            out.hits.push((prim, h.point));
        }
        if s.depth >= cfg.max_depth {
            continue;
        }
        match interact(scene, &s, prim, &h, freq, cfg, &mut rng) {
            Ok(Interaction::Continue(children)) => stack.extend(children.into_iter().rev()),
            Ok(Interaction::Absorbed) => {}
            Err(_) => out.terminated += 1,
        }
    }
    out
}

/// Trace `cfg.rays` rays from `source` and record every path segment that
/// reaches one of `targets`.
pub fn trace_paths(scene: &Scene, source: &Radio, targets: &[Radio], freq: f64, cfg: &TracerConfig) -> Result<TraceOutput> {
    cfg.validate()?;
    if !(freq > 0.0) {
        return Err(Error::Config("frequency must be positive".into()));
    }
    let dirs = launch_directions(cfg.rays, cfg.seed, cfg.launch_rotation);
    let per_ray: Vec<RayOut> = dirs
        .par_iter()
        .enumerate()
        .map(|(i, &d)| trace_ray(scene, i, RaySample::new(source.position, d, source.gain(d)), targets, freq, cfg))
        .collect();
    let mut out = TraceOutput { rays: cfg.rays, ..Default::default() };
    for r in per_ray {
        out.paths.extend(r.paths);
        out.terminated += r.terminated;
        out.neural_hits.extend(r.hits);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnalyticSdf;
    use crate::materials::ClassicalMaterial;
    use crate::scene::{Bounds, PlacedPrimitive, Pose};

    #[test]
    fn proportional_branching() {
        assert!((branch_probability(0.8, 0.2).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(branch_probability(0.0, 1e-12), None);
    }

    fn one_sphere(surface: SurfaceModel) -> Scene {
        Scene::new(
            vec![PlacedPrimitive::analytic("s", AnalyticSdf::sphere(Vec3::ZERO, 1.0), surface, Pose::IDENTITY)],
            vec![],
            Bounds::cube(10.0),
            vec![1e9],
        )
        .unwrap()
    }

    #[test]
    fn mirror_never_penetrates() {
        let scene = one_sphere(SurfaceModel::Mirror(Complex64::new(-1.0, 0.0)));
        let s = RaySample::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::X, 1.0);
        let (i, h) = nearest_hit(&scene, s.origin, s.dir, 100.0, &TracerConfig::default()).unwrap().unwrap();
        assert!((h.t - 2.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let Interaction::Continue(next) = interact(&scene, &s, i, &h, 1e9, &TracerConfig::default(), &mut rng).unwrap() else {
                panic!("mirror absorbed")
            };
            assert_eq!(next.len(), 1);
            assert!((next[0].dir - -Vec3::X).norm() < 1e-6);
        }
    }

    #[test]
    fn split_follows_both_branches_through_a_ball() {
        let m = ClassicalMaterial::new(4.0, 0.0).unwrap();
        let scene = one_sphere(SurfaceModel::Classical(m));
        let cfg = TracerConfig { mode: BranchMode::Split, roulette: 0.0, ..Default::default() };
        let s = RaySample::new(Vec3::new(-3.0, 0.0, 0.0), Vec3::X, 1.0);
        let (i, h) = nearest_hit(&scene, s.origin, s.dir, 100.0, &cfg).unwrap().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let Interaction::Continue(next) = interact(&scene, &s, i, &h, 1e9, &cfg, &mut rng).unwrap() else { panic!() };
        assert_eq!(next.len(), 2);
        let r = &next[0];
        assert!((r.analytic - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-6);
        let t = &next[1];
        // two crossings of sqrt(1 - 1/9) each
        assert!((t.analytic.re - 8.0 / 9.0).abs() < 1e-6);
        assert!((t.origin.x - 1.0).abs() < 1e-5);
        assert!((t.tau - 4.0).abs() < 1e-6);
        assert_eq!(t.segments.len(), 2);
        assert_eq!(t.events.len(), 4);
    }

    #[test]
    fn absorber_blocks_line_of_sight() {
        let scene = Scene::new(
            vec![PlacedPrimitive::analytic(
                "wall",
                AnalyticSdf::cuboid(Vec3::ZERO, Vec3::new(0.05, 4.0, 4.0)),
                SurfaceModel::Absorber,
                Pose::IDENTITY,
            )],
            vec![],
            Bounds::cube(10.0),
            vec![1e9],
        )
        .unwrap();
        let tx = Radio::tx("tx", Vec3::new(2.0, 0.0, 0.0));
        let rx = Radio::rx("rx", Vec3::new(-2.0, 0.0, 0.0));
        let cfg = TracerConfig { rays: 1 << 14, capture_radius: 0.3, ..Default::default() };
        let out = trace_paths(&scene, &tx, &[rx], 1e9, &cfg).unwrap();
        assert!(out.paths.is_empty());
    }
}
