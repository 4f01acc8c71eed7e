//! Reverse-mode tape.
//!
//! Values are scalars in one arena. Every recorded scalar op stores its local
//! partials at record time, so the backward sweep is a single reverse pass.
//! Network layers are recorded as one affine op each; their weights are held
//! by `Arc` and gradients land in per-network buffers.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use super::mlp::{MlpParams, NetRef, ParamKey};
use super::real::{sigmoid_f64, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Un {
    Neg,
    AddC(f64),
    MulC(f64),
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Sigmoid,
    Relu,
    Recip,
}

impl Un {
    /// value and derivative
    fn eval(self, a: f64) -> (f64, f64) {
        match self {
            Un::Neg => (-a, -1.0),
            Un::AddC(c) => (a + c, 1.0),
            Un::MulC(c) => (a * c, c),
            Un::Sqrt => {
                let s = a.sqrt();
                (s, if s > 0.0 { 0.5 / s } else { 0.0 })
            }
            Un::Exp => {
                let e = a.exp();
                (e, e)
            }
            Un::Ln => (a.ln(), 1.0 / a),
            Un::Sin => (a.sin(), a.cos()),
            Un::Cos => (a.cos(), -a.sin()),
            Un::Sigmoid => {
                let s = sigmoid_f64(a);
                (s, s * (1.0 - s))
            }
            Un::Relu => {
                if a > 0.0 {
                    (a, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Un::Recip => (1.0 / a, -1.0 / (a * a)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Bin {
    Add,
    Sub,
    Mul,
    Div,
}

impl Bin {
    fn eval(self, a: f64, b: f64) -> (f64, f64, f64) {
        match self {
            Bin::Add => (a + b, 1.0, 1.0),
            Bin::Sub => (a - b, 1.0, -1.0),
            Bin::Mul => (a * b, b, a),
            Bin::Div => (a / b, 1.0 / b, -a / (b * b)),
        }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Input,
    Un { op: Un, a: u32, d: f64 },
    Bin { op: Bin, a: u32, b: u32, da: f64, db: f64 },
    /// Output `j` of affine record `rec`.
    Affine { rec: u32, j: u32 },
}

#[derive(Clone, Debug)]
struct AffineRec {
    net: u32,
    layer: u32,
    inputs: Vec<u32>,
    out0: u32,
}

struct NetEntry {
    params: Arc<MlpParams>,
    key: Option<ParamKey>,
}

#[derive(Default)]
struct Inner {
    vals: Vec<f64>,
    nodes: Vec<Node>,
    affines: Vec<AffineRec>,
    nets: Vec<NetEntry>,
    net_index: HashMap<(usize, Option<ParamKey>), u32>,
    leaves: Vec<u32>,
}

/// Append-only operation record.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, v: f64, n: Node) -> u32 {
        let mut g = self.inner.borrow_mut();
        let i = g.vals.len() as u32;
        g.vals.push(v);
        g.nodes.push(n);
        i
    }

    /// Differentiable input. Its adjoint is reported by [`Gradients::wrt`].
    pub fn leaf(&self, v: f64) -> Var<'_> {
        let idx = self.push(v, Node::Input);
        self.inner.borrow_mut().leaves.push(idx);
        Var { tape: self, idx }
    }

    pub fn constant(&self, v: f64) -> Var<'_> {
        Var { tape: self, idx: self.push(v, Node::Input) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn un(&self, op: Un, a: u32) -> u32 {
        let av = self.inner.borrow().vals[a as usize];
        let (v, d) = op.eval(av);
        self.push(v, Node::Un { op, a, d })
    }

    fn bin(&self, op: Bin, a: u32, b: u32) -> u32 {
        let (av, bv) = {
            let g = self.inner.borrow();
            (g.vals[a as usize], g.vals[b as usize])
        };
        let (v, da, db) = op.eval(av, bv);
        self.push(v, Node::Bin { op, a, b, da, db })
    }

    fn net_slot(&self, net: &NetRef<'_>) -> u32 {
        let mut g = self.inner.borrow_mut();
        let id = (Arc::as_ptr(net.params) as usize, net.key);
        if let Some(&i) = g.net_index.get(&id) {
            return i;
        }
        let i = g.nets.len() as u32;
        g.nets.push(NetEntry { params: Arc::clone(net.params), key: net.key });
        g.net_index.insert(id, i);
        i
    }

    fn affine(&self, net: &NetRef<'_>, layer: usize, x: &[Var<'_>]) -> u32 {
        let slot = self.net_slot(net);
        let inputs: Vec<u32> = x.iter().map(|v| v.idx).collect();
        let mut g = self.inner.borrow_mut();
        let xs: Vec<f64> = inputs.iter().map(|&i| g.vals[i as usize]).collect();
        let out = <f64 as Real>::affine(net, layer, &xs);
        let rec = g.affines.len() as u32;
        let out0 = g.vals.len() as u32;
        for (j, v) in out.into_iter().enumerate() {
            g.vals.push(v);
            g.nodes.push(Node::Affine { rec, j: j as u32 });
        }
        g.affines.push(AffineRec { net: slot, layer: layer as u32, inputs, out0 });
        out0
    }

    pub fn value(&self, v: Var<'_>) -> f64 {
        self.inner.borrow().vals[v.idx as usize]
    }

    /// Reverse sweep from a single scalar output.
    pub fn backward(&self, output: &[Var<'_>], seed: f64) -> Result<Gradients> {
        if output.len() != 1 {
            return Err(Error::NonScalarOutput(output.len()));
        }
        let g = self.inner.borrow();
        let n = g.vals.len();
        let mut adj = vec![0.0; n];
        let out = output[0].idx as usize;
        adj[out] = seed;
        let mut net_grads: Vec<Option<Vec<f64>>> = (0..g.nets.len()).map(|_| None).collect();
        for i in (0..=out).rev() {
            match &g.nodes[i] {
                Node::Input => {}
                Node::Un { a, d, .. } => {
                    let gi = adj[i];
                    if gi != 0.0 {
                        adj[*a as usize] += gi * d;
                    }
                }
                Node::Bin { a, b, da, db, .. } => {
                    let gi = adj[i];
                    if gi != 0.0 {
                        adj[*a as usize] += gi * da;
                        adj[*b as usize] += gi * db;
                    }
                }
                Node::Affine { rec, j } => {
                    if *j != 0 {
                        continue;
                    }
                    let r = &g.affines[*rec as usize];
                    let entry = &g.nets[r.net as usize];
                    let p = &entry.params;
                    let layer = r.layer as usize;
                    let shape = p.layer(layer);
                    let (w, _) = p.layer_slices(layer);
                    let out0 = r.out0 as usize;
                    let gout = &adj[out0..out0 + shape.n_out];
                    if gout.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let gout: Vec<f64> = gout.to_vec();
                    let mut gin = vec![0.0; shape.n_in];
                    for (jj, gj) in gout.iter().enumerate() {
                        if *gj == 0.0 {
                            continue;
                        }
                        let row = &w[jj * shape.n_in..(jj + 1) * shape.n_in];
                        for (k, wk) in row.iter().enumerate() {
                            gin[k] += wk * gj;
                        }
                    }
                    if entry.key.is_some() {
                        let buf = net_grads[r.net as usize].get_or_insert_with(|| vec![0.0; p.len()]);
                        let nw = shape.n_in * shape.n_out;
                        for (jj, gj) in gout.iter().enumerate() {
                            if *gj == 0.0 {
                                continue;
                            }
                            let base = shape.offset + jj * shape.n_in;
                            for (k, &xi) in r.inputs.iter().enumerate() {
                                buf[base + k] += gj * g.vals[xi as usize];
                            }
                            buf[shape.offset + nw + jj] += gj;
                        }
                    }
                    for (k, &xi) in r.inputs.iter().enumerate() {
                        adj[xi as usize] += gin[k];
                    }
                }
            }
        }
        let mut nets = BTreeMap::new();
        for (e, buf) in g.nets.iter().zip(net_grads) {
            if let (Some(k), Some(b)) = (e.key, buf) {
                nets.entry(k).or_insert_with(|| vec![0.0; b.len()]);
                let dst: &mut Vec<f64> = nets.get_mut(&k).unwrap();
                for (d, s) in dst.iter_mut().zip(&b) {
                    *d += s;
                }
            }
        }
        Ok(Gradients { adj, nets })
    }

    /// Recompute every node in recording order from the stored input values.
    /// `overrides` replaces input values first.
    pub fn replay(&self, overrides: &[(Var<'_>, f64)]) {
        let mut g = self.inner.borrow_mut();
        for (v, x) in overrides {
            if matches!(g.nodes[v.idx as usize], Node::Input) {
                g.vals[v.idx as usize] = *x;
            }
        }
        let n = g.vals.len();
        let mut i = 0;
        while i < n {
            let node = g.nodes[i].clone();
            match node {
                Node::Input => {}
                Node::Un { op, a, .. } => {
                    let (v, d) = op.eval(g.vals[a as usize]);
                    g.vals[i] = v;
                    g.nodes[i] = Node::Un { op, a, d };
                }
                Node::Bin { op, a, b, .. } => {
                    let (v, da, db) = op.eval(g.vals[a as usize], g.vals[b as usize]);
                    g.vals[i] = v;
                    g.nodes[i] = Node::Bin { op, a, b, da, db };
                }
                Node::Affine { rec, .. } => {
                    let r = g.affines[rec as usize].clone();
                    let params = Arc::clone(&g.nets[r.net as usize].params);
                    let xs: Vec<f64> = r.inputs.iter().map(|&k| g.vals[k as usize]).collect();
                    let out = <f64 as Real>::affine(&NetRef::new(&params, None), r.layer as usize, &xs);
                    for (j, v) in out.iter().enumerate() {
                        g.vals[r.out0 as usize + j] = *v;
                    }
                    i = r.out0 as usize + out.len();
                    continue;
                }
            }
            i += 1;
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
    nets: BTreeMap<ParamKey, Vec<f64>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    pub fn net(&self, key: ParamKey) -> Option<&[f64]> {
        self.nets.get(&key).map(|v| v.as_slice())
    }

    pub fn into_store(self) -> GradStore {
        GradStore { nets: self.nets }
    }
}

/// Accumulated parameter gradients keyed by network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStore {
    nets: BTreeMap<ParamKey, Vec<f64>>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, g: &Gradients, scale: f64) {
        for (k, v) in &g.nets {
            let dst = self.nets.entry(*k).or_insert_with(|| vec![0.0; v.len()]);
            for (d, s) in dst.iter_mut().zip(v) {
                *d += scale * s;
            }
        }
    }

    pub fn merge(&mut self, other: &GradStore) {
        for (k, v) in &other.nets {
            let dst = self.nets.entry(*k).or_insert_with(|| vec![0.0; v.len()]);
            for (d, s) in dst.iter_mut().zip(v) {
                *d += s;
            }
        }
    }

    pub fn get(&self, key: ParamKey) -> Option<&[f64]> {
        self.nets.get(&key).map(|v| v.as_slice())
    }

    pub fn keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        self.nets.keys().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.nets.values().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.value(self)
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn backward(self) -> Gradients {
        self.tape.backward(&[self], 1.0).expect("scalar output")
    }

    fn un(self, op: Un) -> Self {
        Var { tape: self.tape, idx: self.tape.un(op, self.idx) }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Self) -> Self {
        Var { tape: self.tape, idx: self.tape.bin(Bin::Add, self.idx, o.idx) }
    }
}
impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Self) -> Self {
        Var { tape: self.tape, idx: self.tape.bin(Bin::Sub, self.idx, o.idx) }
    }
}
impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Self) -> Self {
        Var { tape: self.tape, idx: self.tape.bin(Bin::Mul, self.idx, o.idx) }
    }
}
impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Self) -> Self {
        Var { tape: self.tape, idx: self.tape.bin(Bin::Div, self.idx, o.idx) }
    }
}
impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.un(Un::Neg)
    }
}
impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Self {
        self.un(Un::AddC(c))
    }
}
impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Self {
        self.un(Un::AddC(-c))
    }
}
impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Self {
        self.un(Un::MulC(c))
    }
}
impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Self {
        self.un(Un::MulC(1.0 / c))
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn lift(self, v: f64) -> Self {
        self.tape.constant(v)
    }
    fn sqrt(self) -> Self {
        self.un(Un::Sqrt)
    }
    fn exp(self) -> Self {
        self.un(Un::Exp)
    }
    fn ln(self) -> Self {
        self.un(Un::Ln)
    }
    fn sin(self) -> Self {
        self.un(Un::Sin)
    }
    fn cos(self) -> Self {
        self.un(Un::Cos)
    }
    fn sigmoid(self) -> Self {
        self.un(Un::Sigmoid)
    }
    fn relu(self) -> Self {
        self.un(Un::Relu)
    }
    fn recip(self) -> Self {
        self.un(Un::Recip)
    }
    fn affine(net: &NetRef<'_>, layer: usize, x: &[Self]) -> Vec<Self> {
        let tape = x.first().expect("affine input must be non-empty").tape;
        let out0 = tape.affine(net, layer, x);
        let n = net.params.layer(layer).n_out as u32;
        (0..n).map(|j| Var { tape, idx: out0 + j }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::mlp::{mlp_forward, MlpConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_derivative() {
        let t = Tape::new();
        let w = t.leaf(3.0);
        let f = w * w;
        assert_eq!(f.backward().wrt(w), 6.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let t = Tape::new();
        let w = t.leaf(3.0);
        let c = t.constant(2.0);
        let f = c * c + 1.0;
        assert_eq!(f.backward().wrt(w), 0.0);
    }

    #[test]
    fn vector_seed_rejected() {
        let t = Tape::new();
        let a = t.leaf(1.0);
        let b = t.leaf(2.0);
        assert!(matches!(t.backward(&[a, b], 1.0), Err(Error::NonScalarOutput(2))));
    }

    fn f<R: Real>(x: R, y: R) -> R {
        ((x * y).sin() + (x * x + 1.0).ln() - y.exp() / (x.square() + 2.0)).sigmoid()
            + (x * x + y * y + 0.5).sqrt() * (y * 0.3).cos()
            + (x - 0.2).relu() * 2.0
            + (y + 3.0).recip()
    }

    #[test]
    fn scalar_ops_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x0: f64 = rng.random_range(-1.5..1.5);
            let y0: f64 = rng.random_range(-1.5..1.5);
            if (x0 - 0.2).abs() < 1e-3 {
                continue;
            }
            let t = Tape::new();
            let (x, y) = (t.leaf(x0), t.leaf(y0));
            let g = f(x, y).backward();
            let h = 1e-5;
            let fx = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
            let fy = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
            for (a, b) in [(g.wrt(x), fx), (g.wrt(y), fy)] {
                let rel = (a - b).abs() / b.abs().max(1e-6);
                assert!(rel < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn mlp_loss_gradient_matches_finite_differences() {
        let cfg = MlpConfig { input_dim: 4, hidden_layers: 3, width: 8, output_dim: 2, skips: vec![2] };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = MlpParams::kaiming_uniform(&cfg, &mut rng).unwrap();
        for l in 0..params.num_layers() {
            for b in params.layer_slices_mut(l).1 {
                *b = rng.random_range(0.0..0.3);
            }
        }
        let params = Arc::new(params);
        let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let key = ParamKey::new(0, 0);
        let loss = |p: &Arc<MlpParams>| {
            let o = mlp_forward(&NetRef::new(p, None), &x0).unwrap();
            (o[0] - 0.3).powi(2) + o[1].sigmoid()
        };
        let t = Tape::new();
        let xs: Vec<Var> = x0.iter().map(|&v| t.constant(v)).collect();
        let o = mlp_forward(&NetRef::new(&params, Some(key)), &xs).unwrap();
        let l = (o[0] - 0.3).square() + o[1].sigmoid();
        assert!((l.value() - loss(&params)).abs() < 1e-15);
        let g = l.backward();
        let grad = g.net(key).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        for i in 0..params.len() {
            let mut p = (*params).clone();
            p.data_mut()[i] += h;
            let up = loss(&Arc::new(p.clone()));
            p.data_mut()[i] -= 2.0 * h;
            let dn = loss(&Arc::new(p));
            let fd = (up - dn) / (2.0 * h);
            if fd.abs() < 1e-8 && grad[i].abs() < 1e-8 {
                continue;
            }
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
            assert!(rel < 1e-4, "param {i}: {} vs {fd}", grad[i]);
            checked += 1;
        }
        assert!(checked > 20, "checked {checked}");
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = MlpConfig { input_dim: 3, hidden_layers: 2, width: 6, output_dim: 1, skips: vec![1] };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = Arc::new(MlpParams::kaiming_uniform(&cfg, &mut rng).unwrap());
        let t = Tape::new();
        let xs: Vec<Var> = [0.1, -0.7, 0.4].iter().map(|&v| t.leaf(v)).collect();
        let o = mlp_forward(&NetRef::new(&params, None), &xs).unwrap()[0];
        let out = (o.sin() * xs[0] + 2.0).exp();
        let before = out.value();
        t.replay(&[]);
        assert_eq!(before.to_bits(), out.value().to_bits());
        t.replay(&[(xs[1], 0.9)]);
        assert_ne!(before, out.value());
        t.replay(&[(xs[1], -0.7)]);
        assert_eq!(before.to_bits(), out.value().to_bits());
    }
}
