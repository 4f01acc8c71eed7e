//! Re-evaluation of a recorded path's neural attenuation over [`Real`].
//!
//! Branches, segment directions and lengths stay as traced. Each neural hit
//! point is re-derived from the recorded ray by one linearized root step,
//! `t = t0 - S(o + t0 d) / (grad S . d)`, so its value matches the trace and
//! its derivative is the implicit-function derivative of `S(p(t)) = 0` with
//! respect to network parameters and pose. Interior chords follow their
//! endpoints. Near-grazing hits use a floored slope, which keeps their
//! derivative bounded at the cost of underestimating it.

use super::{Branch, Event, PathRecord, SurfaceEvent};
use crate::autodiff::{ParamKey, Real};
use crate::error::{Error, Result};
use crate::geometry::Field;
use crate::materials::{interior_attenuation, material_response, InteractionQuery, InteriorSample};
use crate::math::{reflect, V3};
use crate::scene::{Payload, PoseVar, Scene, MATERIAL_PART, STRUCTURE_PART};

/// Pose variables and gradient keys for every primitive of a scene.
#[derive(Clone, Debug)]
pub struct ReplayCtx<R> {
    pub like: R,
    pub poses: Vec<PoseVar<R>>,
    /// `[structure, material]` keys; `None` records no parameter gradient.
    pub keys: Vec<[Option<ParamKey>; 2]>,
}

impl<R: Real> ReplayCtx<R> {
    /// Fixed poses, no parameter gradients.
    pub fn constant(scene: &Scene, like: R) -> Self {
        Self {
            like,
            poses: scene.primitives.iter().map(|p| PoseVar::constant(&p.pose, like)).collect(),
            keys: vec![[None, None]; scene.primitives.len()],
        }
    }

    /// Gradient keys for every primitive that is not frozen.
    pub fn with_trainable_keys(mut self, scene: &Scene) -> Self {
        for (i, p) in scene.primitives.iter().enumerate() {
            if !p.frozen {
                self.keys[i] = [Some(crate::scene::param_key(i, STRUCTURE_PART)), Some(crate::scene::param_key(i, MATERIAL_PART))];
            }
        }
        self
    }
}

/// Floor on `|grad S . d|` in the root step; bounds the hit-point
/// derivative for grazing rays.
pub const MIN_SLOPE: f64 = 0.2;

struct LocalPoint<R> {
    p: V3<R>,
    d: V3<R>,
    features: Vec<R>,
}

fn hit_point<R: Real>(scene: &Scene, ctx: &ReplayCtx<R>, se: &SurfaceEvent) -> Result<Option<LocalPoint<R>>> {
    let Payload::Neural(np) = &scene.primitives[se.prim].payload else {
        return Ok(None);
    };
    let local = se.local.ok_or_else(|| Error::Format("neural surface event without local data".into()))?;
    let pv = &ctx.poses[se.prim];
    let o = pv.point_to_object(se.origin.lift(ctx.like));
    let d = pv.dir_to_object(se.dir.lift(ctx.like));
    let p0 = o + d.scale_f(se.t);
    let (s, features) = np.structure.field(ctx.keys[se.prim][0]).eval_full(p0);
    let slope = local.slope.signum() * local.slope.abs().max(MIN_SLOPE);
    let p = p0 - d.scale(s * (1.0 / slope));
    Ok(Some(LocalPoint { p, d, features }))
}

/// Product of the neural coefficients and interior factors along `path`.
pub fn replay_neural<R: Real>(scene: &Scene, path: &PathRecord, freq: f64, ctx: &ReplayCtx<R>) -> Result<R> {
    let mut points: Vec<Option<LocalPoint<R>>> = Vec::with_capacity(path.events.len());
    for e in &path.events {
        points.push(match e {
            Event::Surface(se) => hit_point(scene, ctx, se)?,
            _ => None,
        });
    }
    let mut acc = ctx.like.lift(1.0);
    for (i, e) in path.events.iter().enumerate() {
        match e {
            Event::Surface(se) => {
                let Some(lp) = &points[i] else { continue };
                let Payload::Neural(np) = &scene.primitives[se.prim].payload else { continue };
                let n = se.local.expect("checked in hit_point").normal.lift(ctx.like);
                let out = match se.branch {
                    Branch::Reflect => reflect(lp.d, n),
                    Branch::Penetrate | Branch::Exit => lp.d,
                };
                let q = InteractionQuery {
                    p: lp.p,
                    normal: n,
                    incoming: lp.d,
                    outgoing: out,
                    freq_hz: freq,
                    features: lp.features.clone(),
                };
                acc = acc * material_response(&np.material, ctx.keys[se.prim][1], &q)?;
            }
            Event::Interior { prim, samples, .. } => {
                let Payload::Neural(np) = &scene.primitives[*prim].payload else { continue };
                if *samples == 0 {
                    continue;
                }
                let (Some(Some(entry)), Some(Some(exit))) = (points.get(i.wrapping_sub(1)), points.get(i + 1)) else {
                    return Err(Error::Format("interior chord without bounding surface events".into()));
                };
                let chord = (exit.p - entry.p).dot(entry.d);
                let seg = chord * (1.0 / *samples as f64);
                let field = np.structure.field(ctx.keys[*prim][0]);
                let pts: Vec<InteriorSample<R>> = (0..*samples)
                    .map(|k| {
                        let q = entry.p + entry.d.scale(seg * (k as f64 + 0.5));
                        let features = field.eval_full(q).1;
                        InteriorSample { p: q, features }
                    })
                    .collect();
                acc = acc * interior_attenuation(&np.material, ctx.keys[*prim][1], &pts, entry.d, freq, seg)?;
            }
            Event::Launch { .. } => {}
        }
    }
    Ok(acc)
}
