//! Network-backed directional attenuation.
//!
//! Input layout: position (3), surface normal (3), outgoing direction (3),
//! `log10(f / 1 GHz)` (1), then the structure network's local features.
//! At a surface the sigmoid output is the multiplicative coefficient along
//! the outgoing direction. Inside the medium (normal set to zero) it is
//! scaled by `max_rate` into an attenuation rate per meter.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{mlp_forward, MlpConfig, MlpParams, NetRef, ParamKey, Real};
use crate::error::{Error, Result};
use crate::math::V3;

pub const MATERIAL_BASE_INPUTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub skips: Vec<usize>,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self { hidden_layers: 4, width: 32, skips: vec![2] }
    }
}

impl MaterialConfig {
    /// Large configuration: 8 layers of width 256.
    pub fn full_scale() -> Self {
        Self { hidden_layers: 8, width: 256, skips: vec![4] }
    }

    pub fn mlp(&self, feature_dim: usize) -> MlpConfig {
        MlpConfig {
            input_dim: MATERIAL_BASE_INPUTS + feature_dim,
            hidden_layers: self.hidden_layers,
            width: self.width,
            output_dim: 1,
            skips: self.skips.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralMaterial {
    pub net: Arc<MlpParams>,
    pub feature_dim: usize,
    /// Interior rate (1/m) at a saturated network output.
    pub max_rate: f64,
}

impl NeuralMaterial {
    pub fn new(net: MlpParams, feature_dim: usize, max_rate: f64) -> Result<Self> {
        if net.input_dim() != MATERIAL_BASE_INPUTS + feature_dim || net.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "material network must map {} inputs to 1 output",
                MATERIAL_BASE_INPUTS + feature_dim
            )));
        }
        if !(max_rate >= 0.0) || !max_rate.is_finite() {
            return Err(Error::Config("max_rate must be finite and non-negative".into()));
        }
        Ok(Self { net: Arc::new(net), feature_dim, max_rate })
    }

    /// Kaiming hidden layers, near-zero head (all responses start near 0.5).
    pub fn init<G: Rng + ?Sized>(cfg: &MaterialConfig, feature_dim: usize, max_rate: f64, rng: &mut G) -> Result<Self> {
        let mut p = MlpParams::kaiming_uniform(&cfg.mlp(feature_dim), rng)?;
        let last = p.num_layers() - 1;
        let (w, _) = p.layer_slices_mut(last);
        for v in w.iter_mut() {
            *v *= 0.01;
        }
        Self::new(p, feature_dim, max_rate)
    }

    fn raw<R: Real>(&self, key: Option<ParamKey>, p: V3<R>, n: V3<R>, out: V3<R>, freq_hz: f64, features: &[R]) -> Result<R> {
        if features.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "material expects {} features, got {}",
                self.feature_dim,
                features.len()
            )));
        }
        let like = p.x;
        let mut input = Vec::with_capacity(MATERIAL_BASE_INPUTS + self.feature_dim);
        input.extend_from_slice(&p.to_arr());
        input.extend_from_slice(&n.to_arr());
        input.extend_from_slice(&out.to_arr());
        input.push(like.lift(freq_feature(freq_hz)));
        input.extend_from_slice(features);
        Ok(mlp_forward(&NetRef::new(&self.net, key), &input)?[0])
    }
}

pub fn freq_feature(freq_hz: f64) -> f64 {
    (freq_hz / 1e9).log10()
}

#[derive(Clone, Debug)]
pub struct InteractionQuery<R> {
    pub p: V3<R>,
    pub normal: V3<R>,
    pub incoming: V3<R>,
    pub outgoing: V3<R>,
    pub freq_hz: f64,
    pub features: Vec<R>,
}

/// Coefficient in (0, 1) for leaving the surface along `q.outgoing`.
pub fn material_response<R: Real>(mat: &NeuralMaterial, key: Option<ParamKey>, q: &InteractionQuery<R>) -> Result<R> {
    Ok(mat.raw(key, q.p, q.normal, q.outgoing, q.freq_hz, &q.features)?.sigmoid())
}

/// One interior sample: position and the structure features there.
#[derive(Clone, Debug)]
pub struct InteriorSample<R> {
    pub p: V3<R>,
    pub features: Vec<R>,
}

/// `exp(-sum rate(p_k) * step)`; an empty sample list is transparent.
pub fn interior_attenuation<R: Real>(
    mat: &NeuralMaterial,
    key: Option<ParamKey>,
    samples: &[InteriorSample<R>],
    dir: V3<R>,
    freq_hz: f64,
    step: R,
) -> Result<R> {
    let Some(first) = samples.first() else {
        return Ok(dir.x.lift(1.0));
    };
    let zero = first.p.x.lift(0.0);
    let n = V3::new(zero, zero, zero);
    let mut acc = zero;
    for s in samples {
        acc = acc + mat.raw(key, s.p, n, dir, freq_hz, &s.features)?.sigmoid();
    }
    Ok((-(acc * step * mat.max_rate)).exp())
}
