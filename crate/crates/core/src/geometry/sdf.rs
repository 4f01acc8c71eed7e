//! Signed distance fields: closed-form shapes and network-backed fields.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{lr_schedule_between, mlp_forward, AdamState, Tape, Var, pe_dim, pe_encode, MlpConfig, MlpParams, NetRef, ParamKey, Real};
use crate::error::{Error, Result};
use crate::math::{rabs, rmax, rmin, Vec3, V3};

const INIT_FIT_STEPS: usize = 2000;

/// Anything that can be sphere traced.
pub trait Field {
    /// Signed distance and local feature vector at `p`.
    fn eval_full<R: Real>(&self, p: V3<R>) -> (R, Vec<R>);

    fn eval<R: Real>(&self, p: V3<R>) -> R {
        self.eval_full(p).0
    }

    fn dist(&self, p: Vec3) -> f64 {
        self.eval(p)
    }

    /// Upper clamp on a single sphere-tracing step.
    fn max_step(&self) -> f64 {
        f64::INFINITY
    }
}

impl<F: Field> Field for &F {
    fn eval_full<R: Real>(&self, p: V3<R>) -> (R, Vec<R>) {
        (**self).eval_full(p)
    }
    fn max_step(&self) -> f64 {
        (**self).max_step()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticSdf {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half: Vec3 },
    /// Half-space `n . p <= offset`.
    Plane { normal: Vec3, offset: f64 },
    Union(Vec<AnalyticSdf>),
}

impl AnalyticSdf {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        AnalyticSdf::Sphere { center, radius }
    }

    pub fn cuboid(center: Vec3, half: Vec3) -> Self {
        AnalyticSdf::Box { center, half }
    }

    pub fn plane(normal: Vec3, offset: f64) -> Self {
        AnalyticSdf::Plane { normal, offset }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AnalyticSdf::Sphere { center, radius } => {
                if !(*radius > 0.0) || !center.is_finite() {
                    return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
                }
            }
            AnalyticSdf::Box { center, half } => {
                if !(half.x > 0.0 && half.y > 0.0 && half.z > 0.0) || !center.is_finite() {
                    return Err(Error::Config("box half-extents must be positive".into()));
                }
            }
            AnalyticSdf::Plane { normal, offset } => {
                if (normal.norm() - 1.0).abs() > 1e-9 || !offset.is_finite() {
                    return Err(Error::Config("plane normal must be unit length".into()));
                }
            }
            AnalyticSdf::Union(parts) => {
                if parts.is_empty() {
                    return Err(Error::Config("empty union".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Radius of a sphere about the origin containing the shape, if bounded.
    pub fn bounding_radius(&self) -> Option<f64> {
        match self {
            AnalyticSdf::Sphere { center, radius } => Some(center.norm() + radius),
            AnalyticSdf::Box { center, half } => Some(center.norm() + half.norm()),
            AnalyticSdf::Plane { .. } => None,
            AnalyticSdf::Union(parts) => {
                parts.iter().try_fold(0.0f64, |acc, p| p.bounding_radius().map(|r| acc.max(r)))
            }
        }
    }
}

impl Field for AnalyticSdf {
    fn eval_full<R: Real>(&self, p: V3<R>) -> (R, Vec<R>) {
        (self.eval(p), Vec::new())
    }

    fn eval<R: Real>(&self, p: V3<R>) -> R {
        match self {
            AnalyticSdf::Sphere { center, radius } => p.sub_f(*center).norm() - *radius,
            AnalyticSdf::Box { center, half } => {
                let d = p.sub_f(*center);
                let q = [rabs(d.x) - half.x, rabs(d.y) - half.y, rabs(d.z) - half.z];
                let inside = rmax(rmax(q[0], q[1]), q[2]);
                if inside.value() <= 0.0 {
                    return inside;
                }
                let mut acc: Option<R> = None;
                for v in q {
                    if v.value() > 0.0 {
                        acc = Some(match acc {
                            None => v * v,
                            Some(a) => a + v * v,
                        });
                    }
                }
                acc.map(|a| a.sqrt()).unwrap_or(inside)
            }
            AnalyticSdf::Plane { normal, offset } => p.dot(normal.lift(p.x)) - *offset,
            AnalyticSdf::Union(parts) => {
                let mut best = parts[0].eval(p);
                for s in &parts[1..] {
                    best = rmin(best, s.eval(p));
                }
                best
            }
        }
    }
}

/// Layout of a structure network.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureConfig {
    pub num_freqs: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub feature_dim: usize,
    pub skips: Vec<usize>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self { num_freqs: 6, hidden_layers: 4, width: 32, feature_dim: 16, skips: vec![2] }
    }
}

impl StructureConfig {
    /// Large configuration: 8 layers of width 64 with 128 local features.
    pub fn full_scale() -> Self {
        Self { num_freqs: 6, hidden_layers: 8, width: 64, feature_dim: 128, skips: vec![4] }
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            input_dim: pe_dim(self.num_freqs),
            hidden_layers: self.hidden_layers,
            width: self.width,
            output_dim: 1 + self.feature_dim,
            skips: self.skips.clone(),
        }
    }
}

/// Structure network confined to a bounding sphere, in object coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralSdf {
    pub net: Arc<MlpParams>,
    pub center: Vec3,
    pub radius: f64,
    pub num_freqs: usize,
}

impl NeuralSdf {
    pub fn new(net: MlpParams, center: Vec3, radius: f64, num_freqs: usize) -> Result<Self> {
        if net.input_dim() != pe_dim(num_freqs) {
            return Err(Error::Shape(format!(
                "structure network takes {} inputs but encoding has {}",
                net.input_dim(),
                pe_dim(num_freqs)
            )));
        }
        if net.output_dim() < 1 {
            return Err(Error::Shape("structure network needs a distance output".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config("bounding radius must be positive".into()));
        }
        Ok(Self { net: Arc::new(net), center, radius, num_freqs })
    }

    pub fn feature_dim(&self) -> usize {
        self.net.output_dim() - 1
    }

    pub fn field(&self, key: Option<ParamKey>) -> NeuralField<'_> {
        NeuralField { sdf: self, key }
    }

    /// Network whose zero level set starts as the sphere of radius
    /// `init_radius`: radial-mean initialization with the sinusoidal inputs
    /// switched off, followed by a short regression onto the sphere distance.
    pub fn geometric_init<G: Rng + ?Sized>(
        cfg: &StructureConfig,
        center: Vec3,
        radius: f64,
        init_radius: f64,
        rng: &mut G,
    ) -> Result<Self> {
        if !(init_radius > 0.0 && init_radius < radius) {
            return Err(Error::Config("initial sphere must fit inside the bounding sphere".into()));
        }
        let mlp = cfg.mlp();
        let mut params = MlpParams::zeros(&mlp)?;
        let input_dim = mlp.input_dim;
        let last = params.num_layers() - 1;
        for i in 0..last {
            let l = params.layer(i);
            let normal = Normal::new(0.0, (2.0 / l.n_out as f64).sqrt()).expect("positive std");
            let skip = params.skips().contains(&i);
            let (w, _) = params.layer_slices_mut(i);
            for j in 0..l.n_out {
                for k in 0..l.n_in {
                    // Position in the network input, if this column reads it.
                    let input_col = if i == 0 {
                        Some(k)
                    } else if skip && k >= l.n_in - input_dim {
                        Some(k - (l.n_in - input_dim))
                    } else {
                        None
                    };
                    let mut v = normal.sample(rng);
                    if matches!(input_col, Some(c) if c >= 3) {
                        v = 0.0;
                    }
                    if skip {
                        v *= std::f64::consts::FRAC_1_SQRT_2;
                    }
                    w[j * l.n_in + k] = v;
                }
            }
        }
        let l = params.layer(last);
        let head = Normal::new((std::f64::consts::PI / l.n_in as f64).sqrt(), 1e-4).expect("positive std");
        let feat = Normal::new(0.0, 0.01).expect("positive std");
        let (w, bias) = params.layer_slices_mut(last);
        for k in 0..l.n_in {
            w[k] = head.sample(rng) * radius;
        }
        for v in &mut w[l.n_in..] {
            *v = feat.sample(rng);
        }
        bias[0] = -init_radius;
        let mut sdf = Self::new(params, center, radius, cfg.num_freqs)?;
        sdf.fit_sphere(init_radius, INIT_FIT_STEPS, rng)?;
        Ok(sdf)
    }

    /// Adam regression of the raw network output onto a sphere distance.
    fn fit_sphere<G: Rng + ?Sized>(&mut self, init_radius: f64, steps: usize, rng: &mut G) -> Result<()> {
        let key = ParamKey::new(u32::MAX, 0);
        let mut adam = AdamState::new(self.net.len());
        for it in 0..steps {
            let tape = Tape::new();
            let mut loss = tape.constant(0.0);
            let batch = 32;
            let net = NetRef::new(&self.net, Some(key));
            let raw = |p: Vec3| -> Result<Var<'_>> {
                let q = (p * (1.0 / self.radius)).lift(tape.constant(0.0));
                Ok(mlp_forward(&net, &pe_encode(q.to_arr(), self.num_freqs))?[0])
            };
            for k in 0..batch {
                let p = if k % 2 == 0 {
                    sample_in_ball(rng, self.radius)
                } else {
                    random_unit(rng) * (init_radius + rng.random_range(-0.1..0.1) * self.radius)
                };
                let e = raw(p)? - (p.norm() - init_radius);
                loss = loss + e * e;
            }
            let loss = loss / batch as f64;
            let grads = tape.backward(&[loss], 1.0)?;
            let g = grads.net(key).ok_or(Error::NonFiniteGradient)?.to_vec();
            drop(tape);
            let lr = lr_schedule_between(it, steps, 5e-4, 5e-5);
            adam.step(Arc::make_mut(&mut self.net).data_mut(), &g, lr)?;
        }
        Ok(())
    }
}

/// Uniform sample in a ball of radius `r` about the origin.
pub fn sample_in_ball<G: Rng + ?Sized>(rng: &mut G, r: f64) -> Vec3 {
    loop {
        let p = V3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm_sq() <= 1.0 {
            return p * r;
        }
    }
}

pub fn random_unit<G: Rng + ?Sized>(rng: &mut G) -> Vec3 {
    loop {
        let p = sample_in_ball(rng, 1.0);
        let n = p.norm();
        if n > 1e-6 {
            return p * (1.0 / n);
        }
    }
}

/// A [`NeuralSdf`] bound to an optional gradient key.
#[derive(Clone, Copy)]
pub struct NeuralField<'a> {
    pub sdf: &'a NeuralSdf,
    pub key: Option<ParamKey>,
}

impl Field for NeuralField<'_> {
    fn eval_full<R: Real>(&self, p: V3<R>) -> (R, Vec<R>) {
        let s = self.sdf;
        let rel = p.sub_f(s.center);
        let ball = rel.norm() - s.radius;
        if ball.value() > 0.0 {
            return (ball, vec![p.x.lift(0.0); s.feature_dim()]);
        }
        let q = rel.scale_f(1.0 / s.radius);
        let input = pe_encode(q.to_arr(), s.num_freqs);
        let out = mlp_forward(&NetRef::new(&s.net, self.key), &input).expect("structure network shape checked at construction");
        let d = rmax(out[0], ball);
        (d, out[1..].to_vec())
    }

    fn max_step(&self) -> f64 {
        self.sdf.radius
    }
}

/// Central-difference gradient of `field` at `p`.
pub fn fd_gradient<F: Field, R: Real>(field: &F, p: V3<R>, h: f64) -> V3<R> {
    let mut g = [p.x; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let e = Vec3::axis(i) * h;
        let hi = field.eval(p.add_f(e));
        let lo = field.eval(p.sub_f(e));
        *gi = (hi - lo) / (2.0 * h);
    }
    V3::new(g[0], g[1], g[2])
}

/// Unit surface normal by central differences.
pub fn sdf_normal<F: Field>(field: &F, p: Vec3, eps_fd: f64) -> Result<Vec3> {
    let g = fd_gradient(field, p, eps_fd);
    let n = g.norm();
    if !(n > 1e-12) || !n.is_finite() {
        return Err(Error::DegenerateNormal);
    }
    Ok(g * (1.0 / n))
}

/// Signed distance and features; analytic fields return no features.
pub fn sdf_eval<F: Field>(field: &F, p: Vec3) -> (f64, Vec<f64>) {
    field.eval_full(p)
}
