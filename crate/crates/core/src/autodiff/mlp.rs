//! Dense multilayer perceptrons with optional input skip connections.
//!
//! Parameters live in one flat buffer so the optimizer, the serializer and
//! the gradient store can treat every network uniformly.

use std::sync::Arc;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::real::Real;
use crate::error::{Error, Result};

/// Identifies a parameter tensor across tapes and gradient stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub owner: u32,
    pub part: u8,
}

impl ParamKey {
    pub const fn new(owner: u32, part: u8) -> Self {
        Self { owner, part }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    /// Hidden-layer indices whose input is `concat(previous, network input)`.
    pub skips: Vec<usize>,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.width == 0 {
            return Err(Error::Shape("network dimensions must be positive".into()));
        }
        if self.hidden_layers == 0 {
            return Err(Error::Shape("at least one hidden layer is required".into()));
        }
        for &s in &self.skips {
            if s == 0 || s >= self.hidden_layers {
                return Err(Error::Shape(format!(
                    "skip index {s} is not an interior hidden layer (1..{})",
                    self.hidden_layers
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    input_dim: usize,
    layers: Vec<LayerShape>,
    skips: Vec<usize>,
    data: Vec<f64>,
}

/// Borrowed handle used when evaluating a network.
///
/// `key == None` evaluates the network as a constant: taped evaluation still
/// propagates derivatives to the inputs but records no parameter gradient.
#[derive(Clone, Copy)]
pub struct NetRef<'a> {
    pub params: &'a Arc<MlpParams>,
    pub key: Option<ParamKey>,
}

impl<'a> NetRef<'a> {
    pub fn new(params: &'a Arc<MlpParams>, key: Option<ParamKey>) -> Self {
        Self { params, key }
    }
}

impl MlpParams {
    pub fn zeros(cfg: &MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut offset = 0;
        for i in 0..=cfg.hidden_layers {
            let n_in = if i == 0 {
                cfg.input_dim
            } else if cfg.skips.contains(&i) {
                cfg.width + cfg.input_dim
            } else {
                cfg.width
            };
            let n_out = if i == cfg.hidden_layers { cfg.output_dim } else { cfg.width };
            let l = LayerShape { n_in, n_out, offset };
            offset += l.len();
            layers.push(l);
        }
        let mut skips = cfg.skips.clone();
        skips.sort_unstable();
        skips.dedup();
        Ok(Self { input_dim: cfg.input_dim, layers, skips, data: vec![0.0; offset] })
    }

    /// Kaiming-uniform weights, zero biases.
    pub fn kaiming_uniform<R: Rng + ?Sized>(cfg: &MlpConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        for i in 0..p.layers.len() {
            let l = p.layers[i];
            let bound = (6.0 / l.n_in as f64).sqrt();
            for w in &mut p.data[l.offset..l.offset + l.n_in * l.n_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    /// Rebuild from explicit shapes; used by the deserializer.
    pub fn from_parts(
        input_dim: usize,
        shapes: &[(usize, usize)],
        skips: Vec<usize>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for &(n_in, n_out) in shapes {
            let l = LayerShape { n_in, n_out, offset };
            offset += l.len();
            layers.push(l);
        }
        if offset != data.len() {
            return Err(Error::Shape(format!(
                "parameter count {} does not match layer shapes ({offset})",
                data.len()
            )));
        }
        let p = Self { input_dim, layers, skips, data };
        p.check_chain()?;
        Ok(p)
    }

    fn check_chain(&self) -> Result<()> {
        let first = self.layers.first().ok_or_else(|| Error::Shape("empty network".into()))?;
        if first.n_in != self.input_dim {
            return Err(Error::Shape("first layer does not match input dimension".into()));
        }
        for i in 1..self.layers.len() {
            let prev = self.layers[i - 1].n_out;
            let want = if self.skips.contains(&i) { prev + self.input_dim } else { prev };
            if self.layers[i].n_in != want {
                return Err(Error::Shape(format!("layer {i} input {} != {want}", self.layers[i].n_in)));
            }
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> LayerShape {
        self.layers[i]
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn skips(&self) -> &[usize] {
        &self.skips
    }

    pub fn layer_slices(&self, i: usize) -> (&[f64], &[f64]) {
        let l = self.layers[i];
        let nw = l.n_in * l.n_out;
        (&self.data[l.offset..l.offset + nw], &self.data[l.offset + nw..l.offset + nw + l.n_out])
    }

    pub fn layer_slices_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let l = self.layers[i];
        let nw = l.n_in * l.n_out;
        let (w, b) = self.data[l.offset..l.offset + l.len()].split_at_mut(nw);
        (w, b)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// SHA-256 over shapes and little-endian parameter bytes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.input_dim as u64).to_le_bytes());
        for l in &self.layers {
            h.update((l.n_in as u64).to_le_bytes());
            h.update((l.n_out as u64).to_le_bytes());
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Forward pass: ReLU hidden layers, linear output.
pub fn mlp_forward<R: Real>(net: &NetRef<'_>, input: &[R]) -> Result<Vec<R>> {
    let p = net.params;
    if input.len() != p.input_dim {
        return Err(Error::Shape(format!(
            "network expects {} inputs, got {}",
            p.input_dim,
            input.len()
        )));
    }
    let last = p.layers.len() - 1;
    let mut h: Vec<R> = input.to_vec();
    for i in 0..=last {
        if p.skips.contains(&i) {
            h.extend_from_slice(input);
        }
        let mut z = R::affine(net, i, &h);
        if i < last {
            for v in z.iter_mut() {
                *v = v.relu();
            }
        }
        h = z;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> MlpConfig {
        MlpConfig { input_dim: 3, hidden_layers: 3, width: 5, output_dim: 2, skips: vec![2] }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let p = Arc::new(MlpParams::zeros(&cfg()).unwrap());
        let out = mlp_forward(&NetRef::new(&p, None), &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn skip_layer_widens_input() {
        let p = MlpParams::zeros(&cfg()).unwrap();
        assert_eq!(p.layer(2).n_in, 5 + 3);
        assert_eq!(p.layer(1).n_in, 5);
        assert_eq!(p.output_dim(), 2);
    }

    #[test]
    fn single_layer_identity_is_relu_then_linear() {
        // one hidden identity layer followed by identity head: out = relu(v)
        let c = MlpConfig { input_dim: 3, hidden_layers: 1, width: 3, output_dim: 3, skips: vec![] };
        let mut p = MlpParams::zeros(&c).unwrap();
        for layer in 0..2 {
            let (w, _) = p.layer_slices_mut(layer);
            for i in 0..3 {
                w[i * 3 + i] = 1.0;
            }
        }
        let p = Arc::new(p);
        let out = mlp_forward(&NetRef::new(&p, None), &[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(out, vec![1.5, 0.0, 0.25]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = Arc::new(MlpParams::zeros(&cfg()).unwrap());
        assert!(matches!(mlp_forward(&NetRef::new(&p, None), &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_skip_rejected() {
        let mut c = cfg();
        c.skips = vec![0];
        assert!(MlpParams::zeros(&c).is_err());
        c.skips = vec![3];
        assert!(MlpParams::zeros(&c).is_err());
    }

    #[test]
    fn structure_sized_network_has_feature_head() {
        let c = MlpConfig { input_dim: 39, hidden_layers: 8, width: 64, output_dim: 129, skips: vec![4] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Arc::new(MlpParams::kaiming_uniform(&c, &mut rng).unwrap());
        let x = vec![0.1; 39];
        assert_eq!(mlp_forward(&NetRef::new(&p, None), &x).unwrap().len(), 1 + 128);
    }
}
