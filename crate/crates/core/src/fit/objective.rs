//! The fitting objective over pinned paths.
//!
//! Paths are traced once per group of measurements sharing a transmitter
//! and frequency and then held fixed ("pinned"). The received field is
//! `E = sum_p A_p(theta) C_p` where `A_p` is the replayed neural factor and
//! `C_p` everything else. The data term and its derivative with respect to
//! each `E` are evaluated in closed form; parameter gradients then come from
//! one reverse sweep over `sum_p w_p A_p(theta)` with `w_p = dL/dA_p`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::loss::loss_and_slope;
use super::measure::MeasurementSet;
use crate::autodiff::{GradStore, Tape};
use crate::error::{Error, Result};
use crate::geometry::{random_unit, regularizers, sample_in_ball, sdf_normal, Field, NeuralSdf};
use crate::math::{pairwise_sum, Vec3, V3};
use crate::scene::{param_key, Payload, Radio, RadioRole, Scene, STRUCTURE_PART};
use crate::tracer::replay::{replay_neural, ReplayCtx};
use crate::tracer::{arrival_base, trace_paths, PathRecord, TracerConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Measurements per step, drawn with replacement; the whole set when
    /// at least its size.
    pub batch_size: usize,
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Learning-rate multiplier for structure networks.
    pub structure_lr_scale: f64,
    pub lambda_eik: f64,
    pub lambda_lap: f64,
    pub seed: u64,
    pub tracer: TracerConfig,
    /// Steps between re-tracing the pinned paths.
    pub retrace_every: usize,
    /// Regularizer samples per primitive and step.
    pub reg_samples: usize,
    /// Finite-difference step of the regularizers (m).
    pub reg_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            iterations: 10_000,
            lr_start: 3e-4,
            lr_end: 3e-5,
            structure_lr_scale: 1.0,
            lambda_eik: 0.1,
            lambda_lap: 0.01,
            seed: 0,
            tracer: TracerConfig { rays: 2048, ..Default::default() },
            retrace_every: 50,
            reg_samples: 64,
            reg_step: 1e-3,
        }
    }
}

impl TrainConfig {
    /// Settings for pose adaptation: larger steps, frequent re-tracing.
    pub fn adaptation() -> Self {
        Self { iterations: 150, lr_start: 0.02, lr_end: 0.002, retrace_every: 5, lambda_eik: 0.0, lambda_lap: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.tracer.validate()?;
        let ok = self.batch_size > 0
            && self.lr_start > 0.0
            && self.lr_end > 0.0
            && self.structure_lr_scale > 0.0
            && self.lambda_eik >= 0.0
            && self.lambda_lap >= 0.0
            && self.retrace_every > 0
            && self.reg_step > 0.0;
        if !ok {
            return Err(Error::Config("training settings must be positive".into()));
        }
        Ok(())
    }
}

/// The scene's radio at `position` with `role`, or an isotropic unit one.
pub fn radio_at(scene: &Scene, role: RadioRole, position: Vec3) -> Radio {
    scene
        .radios
        .iter()
        .find(|r| r.role == role && (r.position - position).norm() <= 1e-9)
        .cloned()
        .unwrap_or_else(|| match role {
            RadioRole::Tx => Radio::tx("tx", position),
            RadioRole::Rx => Radio::rx("rx", position),
        })
}

/// Paths for the measurements sharing one transmitter and frequency;
/// `arrival.rx` indexes `members`.
#[derive(Clone, Debug)]
pub struct PinnedGroup {
    pub tx: Radio,
    pub freq: f64,
    pub members: Vec<usize>,
    pub paths: Vec<PathRecord>,
}

#[derive(Clone, Debug)]
pub struct Pinned {
    pub groups: Vec<PinnedGroup>,
}

fn group_key(tx: Vec3, f: f64) -> [u64; 4] {
    [tx.x.to_bits(), tx.y.to_bits(), tx.z.to_bits(), f.to_bits()]
}

pub fn pin_paths(scene: &Scene, data: &MeasurementSet, cfg: &TracerConfig) -> Result<Pinned> {
    let mut groups: BTreeMap<[u64; 4], Vec<usize>> = BTreeMap::new();
    for (i, r) in data.records().iter().enumerate() {
        groups.entry(group_key(r.tx, r.freq)).or_default().push(i);
    }
    let mut out = Vec::with_capacity(groups.len());
    for members in groups.into_values() {
        let first = &data.records()[members[0]];
        let tx = radio_at(scene, RadioRole::Tx, first.tx);
        let rxs: Vec<Radio> = members.iter().map(|&i| radio_at(scene, RadioRole::Rx, data.records()[i].rx)).collect();
        for r in std::iter::once(&tx).chain(&rxs) {
            if !scene.bounds.contains(r.position) {
                return Err(Error::Config(format!("measurement position {:?} is outside the scene bounds", r.position)));
            }
        }
        let trace = trace_paths(scene, &tx, &rxs, first.freq, cfg)?;
        out.push(PinnedGroup { tx, freq: first.freq, members, paths: trace.paths });
    }
    Ok(Pinned { groups: out })
}

/// Received field for every measurement from the traced attenuations.
pub fn pinned_fields(pinned: &Pinned, n: usize) -> Result<Vec<Complex64>> {
    let mut terms: Vec<Vec<Complex64>> = vec![Vec::new(); n];
    for g in &pinned.groups {
        for p in &g.paths {
            for a in &p.arrivals {
                terms[g.members[a.rx]].push(arrival_base(p, a, g.freq, g.tx.amplitude)? * p.neural);
            }
        }
    }
    Ok(terms.iter().map(|t| pairwise_sum(t)).collect())
}

/// Regularizer sample points (object frame) per trainable neural primitive.
#[derive(Clone, Debug, Default)]
pub struct RegSamples {
    pub per_prim: Vec<(usize, Vec<Vec3>)>,
}

/// Fraction of the bounding radius used for regularizer samples.
const INNER: f64 = 0.9;

/// Points within `band` of the zero level set, found by projecting uniform
/// samples with a few Newton steps.
pub fn near_surface_samples<G: Rng + ?Sized>(sdf: &NeuralSdf, n: usize, band: f64, rng: &mut G) -> Result<Vec<Vec3>> {
    let field = sdf.field(None);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > 50 * n.max(1) {
            return Err(Error::EmptySamples);
        }
        let mut p = sdf.center + sample_in_ball(rng, sdf.radius * INNER);
        let mut ok = false;
        for _ in 0..8 {
            let s: f64 = field.eval(p);
            let Ok(g) = sdf_normal(&field, p, 1e-4) else { break };
            if s.abs() < 1e-5 {
                ok = true;
                break;
            }
            p = p - g * s;
        }
        if !ok || (p - sdf.center).norm() > sdf.radius * INNER {
            continue;
        }
        let offset = if band > 0.0 { rng.random_range(-band..band) } else { 0.0 };
        out.push(p + random_unit(rng) * offset);
    }
    Ok(out)
}

/// Half uniform inside each bounding ball, half near the current surface.
/// Samples stay clear of the ball's edge, where the field switches to the
/// bounding distance and is not smooth.
pub fn draw_reg_samples<G: Rng + ?Sized>(scene: &Scene, n: usize, rng: &mut G) -> Result<RegSamples> {
    let mut per_prim = Vec::new();
    if n == 0 {
        return Ok(RegSamples { per_prim });
    }
    for (i, p) in scene.primitives.iter().enumerate() {
        let Payload::Neural(np) = &p.payload else { continue };
        if p.frozen {
            continue;
        }
        let s = &np.structure;
        let inner = INNER * s.radius;
        let mut pts: Vec<Vec3> = (0..n / 2).map(|_| s.center + sample_in_ball(rng, inner)).collect();
        match near_surface_samples(s, n - n / 2, 0.05 * s.radius, rng) {
            Ok(near) => pts.extend(near),
            // no surface left inside the ball: fall back to uniform samples
            Err(Error::EmptySamples) => pts.extend((0..n - n / 2).map(|_| s.center + sample_in_ball(rng, inner))),
            Err(e) => return Err(e),
        }
        per_prim.push((i, pts));
    }
    Ok(RegSamples { per_prim })
}

/// What the reverse sweep differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    Nothing,
    /// Network parameters of non-frozen primitives.
    Networks,
    /// Tangent pose `(rotation, translation)` of dynamic primitives.
    Poses,
}

#[derive(Clone, Debug)]
pub struct Objective {
    pub value: f64,
    /// Mean loss over the batch.
    pub data: f64,
    pub eikonal: f64,
    pub laplacian: f64,
    pub grads: GradStore,
    /// `[d rotation (3), d translation (3)]` per primitive.
    pub pose_grads: Vec<[f64; 6]>,
    /// Predicted field per measurement in the batch (zero elsewhere).
    pub fields: Vec<Complex64>,
}

const CHUNK: usize = 32;

fn replay_ctx<'t>(scene: &Scene, tape: &'t Tape, wrt: Wrt) -> (ReplayCtx<crate::autodiff::Var<'t>>, Vec<Option<[crate::autodiff::Var<'t>; 6]>>) {
    let like = tape.constant(0.0);
    let mut ctx = ReplayCtx::constant(scene, like);
    let mut leaves = vec![None; scene.primitives.len()];
    match wrt {
        Wrt::Networks => ctx = ctx.with_trainable_keys(scene),
        Wrt::Poses => {
            for (i, p) in scene.primitives.iter().enumerate() {
                if !p.dynamic {
                    continue;
                }
                let t = p.pose.translation;
                let l = [
                    tape.leaf(0.0),
                    tape.leaf(0.0),
                    tape.leaf(0.0),
                    tape.leaf(t.x),
                    tape.leaf(t.y),
                    tape.leaf(t.z),
                ];
                ctx.poses[i].delta = V3::new(l[0], l[1], l[2]);
                ctx.poses[i].t = V3::new(l[3], l[4], l[5]);
                leaves[i] = Some(l);
            }
        }
        Wrt::Nothing => {}
    }
    (ctx, leaves)
}

/// Batch-mean loss plus weighted regularizers, with gradients for `wrt`.
/// `batch` lists measurement indices; repeats count repeatedly.
pub fn total_objective(
    scene: &Scene,
    data: &MeasurementSet,
    batch: &[usize],
    pinned: &Pinned,
    reg: &RegSamples,
    cfg: &TrainConfig,
    wrt: Wrt,
) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let n = data.len();
    let mut count = vec![0usize; n];
    for &j in batch {
        *count.get_mut(j).ok_or_else(|| Error::Config(format!("batch index {j} out of range")))? += 1;
    }
    let scale = 1.0 / batch.len() as f64;

    // Forward pass in f64 over every path that reaches a batch member.
    let f64_ctx = ReplayCtx::constant(scene, 0.0f64);
    let mut used: Vec<(usize, usize, f64)> = Vec::new();
    let mut terms: Vec<Vec<Complex64>> = vec![Vec::new(); n];
    for (gi, g) in pinned.groups.iter().enumerate() {
        for (pi, p) in g.paths.iter().enumerate() {
            if !p.arrivals.iter().any(|a| count[g.members[a.rx]] > 0) {
                continue;
            }
            let a_p = replay_neural(scene, p, g.freq, &f64_ctx)?;
            for a in &p.arrivals {
                let j = g.members[a.rx];
                if count[j] > 0 {
                    terms[j].push(arrival_base(p, a, g.freq, g.tx.amplitude)? * a_p);
                }
            }
            used.push((gi, pi, 0.0));
        }
    }
    let fields: Vec<Complex64> = terms.iter().map(|t| pairwise_sum(t)).collect();
    let mut data_term = 0.0;
    let mut slopes = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        if count[j] == 0 {
            continue;
        }
        let (l, s) = loss_and_slope(fields[j], &data.records()[j]);
        data_term += count[j] as f64 * scale * l;
        slopes[j] = s * (count[j] as f64 * scale);
    }
    for u in &mut used {
        let g = &pinned.groups[u.0];
        let p = &g.paths[u.1];
        let mut w = 0.0;
        for a in &p.arrivals {
            let j = g.members[a.rx];
            if count[j] > 0 {
                let c = arrival_base(p, a, g.freq, g.tx.amplitude)?;
                w += slopes[j].re * c.re + slopes[j].im * c.im;
            }
        }
        u.2 = w;
    }

    let mut grads = GradStore::new();
    let mut pose_grads = vec![[0.0; 6]; scene.primitives.len()];
    if wrt != Wrt::Nothing {
        let active: Vec<&(usize, usize, f64)> = used.iter().filter(|u| u.2 != 0.0).collect();
        let parts: Vec<Result<(GradStore, Vec<[f64; 6]>)>> = active
            .par_chunks(CHUNK)
            .map(|chunk| {
                let tape = Tape::new();
                let (ctx, leaves) = replay_ctx(scene, &tape, wrt);
                let mut total = tape.constant(0.0);
                for &&(gi, pi, w) in chunk {
                    let g = &pinned.groups[gi];
                    total = total + replay_neural(scene, &g.paths[pi], g.freq, &ctx)? * w;
                }
                let gr = tape.backward(&[total], 1.0)?;
                let pg = leaves
                    .iter()
                    .map(|l| l.map_or([0.0; 6], |l| l.map(|v| gr.wrt(v))))
                    .collect();
                Ok((gr.into_store(), pg))
            })
            .collect();
        for part in parts {
            let (g, pg) = part?;
            grads.merge(&g);
            for (dst, src) in pose_grads.iter_mut().zip(pg) {
                for k in 0..6 {
                    dst[k] += src[k];
                }
            }
        }
    }

    let (mut eik, mut lap) = (0.0, 0.0);
    for (i, pts) in &reg.per_prim {
        let Payload::Neural(np) = &scene.primitives[*i].payload else { continue };
        let want_grad = wrt == Wrt::Networks && (cfg.lambda_eik > 0.0 || cfg.lambda_lap > 0.0);
        if want_grad {
            let tape = Tape::new();
            let like = tape.constant(0.0);
            let field = np.structure.field(Some(param_key(*i, STRUCTURE_PART)));
            let lifted: Vec<V3<_>> = pts.iter().map(|p| p.lift(like)).collect();
            let (e, l) = regularizers(&field, &lifted, cfg.reg_step)?;
            eik += e.value();
            lap += l.value();
            let total = e * cfg.lambda_eik + l * cfg.lambda_lap;
            grads.merge(&tape.backward(&[total], 1.0)?.into_store());
        } else {
            let (e, l) = regularizers(&np.structure.field(None), pts, cfg.reg_step)?;
            eik += e;
            lap += l;
        }
    }
    let value = data_term + cfg.lambda_eik * eik + cfg.lambda_lap * lap;
    Ok(Objective { value, data: data_term, eikonal: eik, laplacian: lap, grads, pose_grads, fields })
}
