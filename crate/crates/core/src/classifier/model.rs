//! Parameters, forward pass and hand-written reverse pass of the classifier.
//!
//! ```text
//! p_v = W_v·v + b_v          p_t = W_t·t + b_t          p_k = W_k·k_agg + b_k
//! gated:  h = σ(W_g·[p_v ‖ p_t] + b_g) ⊙ (p_v − p_t) + p_t
//! concat: h = p_v + p_t      (one projection of [v ‖ t])
//! logits = W_o·[h ‖ p_k] + b_o,  probs = softmax(logits)
//! ```

use serde::{Deserialize, Serialize};

use super::loss::softmax;
use crate::error::{Error, Result};
use crate::fusion::{gated_fuse, FusionMode, GateParams, ProjectionParams};
use crate::linalg::Matrix;
use crate::rng::SplitMix64;

pub const NUM_CLASSES: usize = 2;

/// Input and hidden sizes of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Image frequency-feature length.
    pub d_v: usize,
    /// Text frequency-feature length.
    pub d_t: usize,
    /// Projection (fusion) width.
    pub d_f: usize,
    /// Knowledge key dimension.
    pub d_k: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if [self.d_v, self.d_t, self.d_f, self.d_k].contains(&0) || self.classes < 2 {
            return Err(Error::InvalidConfig(format!("invalid model dims {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub proj_v: ProjectionParams,
    pub proj_t: ProjectionParams,
    pub gate: GateParams,
    pub proj_k: ProjectionParams,
    pub head: ProjectionParams,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

pub const TENSOR_NAMES: [&str; 10] = [
    "proj_v.weight",
    "proj_v.bias",
    "proj_t.weight",
    "proj_t.bias",
    "gate.weight",
    "gate.bias",
    "proj_k.weight",
    "proj_k.bias",
    "head.weight",
    "head.bias",
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            proj_v: ProjectionParams::zeros(dims.d_f, dims.d_v),
            proj_t: ProjectionParams::zeros(dims.d_f, dims.d_t),
            gate: GateParams::zeros(dims.d_f),
            proj_k: ProjectionParams::zeros(dims.d_f, dims.d_k),
            head: ProjectionParams::zeros(dims.classes, 2 * dims.d_f),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d_v: self.proj_v.d_in(),
            d_t: self.proj_t.d_in(),
            d_f: self.proj_v.d_out(),
            d_k: self.proj_k.d_in(),
            classes: self.head.d_out(),
        }
    }

    /// Every tensor as a flat slice, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            self.proj_v.weight.as_slice(),
            &self.proj_v.bias,
            self.proj_t.weight.as_slice(),
            &self.proj_t.bias,
            self.gate.weight.as_slice(),
            &self.gate.bias,
            self.proj_k.weight.as_slice(),
            &self.proj_k.bias,
            self.head.weight.as_slice(),
            &self.head.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.proj_v.weight.as_mut_slice(),
            &mut self.proj_v.bias,
            self.proj_t.weight.as_mut_slice(),
            &mut self.proj_t.bias,
            self.gate.weight.as_mut_slice(),
            &mut self.gate.bias,
            self.proj_k.weight.as_mut_slice(),
            &mut self.proj_k.bias,
            self.head.weight.as_mut_slice(),
            &mut self.head.bias,
        ]
    }

    /// `(rows, cols)` of each tensor; biases are column vectors.
    pub fn shapes(&self) -> [(usize, usize); 10] {
        let m = |w: &Matrix| (w.rows(), w.cols());
        let v = |b: &[f64]| (b.len(), 1);
        [
            m(&self.proj_v.weight),
            v(&self.proj_v.bias),
            m(&self.proj_t.weight),
            v(&self.proj_t.bias),
            m(&self.gate.weight),
            v(&self.gate.bias),
            m(&self.proj_k.weight),
            v(&self.proj_k.bias),
            m(&self.head.weight),
            v(&self.head.bias),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Seeded initial parameters.
///
/// Gate and knowledge projection are Xavier-uniform. The two spectral
/// projections use the Xavier bound divided by `sqrt(d_in / 2)`, the standard
/// deviation of one unnormalized FFT coordinate of a unit-variance input, so
/// their outputs start at unit scale. The head starts at zero and all biases
/// are zero, so the initial prediction is uniform and the random part of the
/// projections never reaches the logits untrained.
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut p = ModelParams::zeros(dims);
    let spectral_gain = |d_in: usize| (d_in as f64 / 2.0).sqrt().max(1.0);
    let weights: [(&mut Matrix, f64); 4] = [
        (&mut p.proj_v.weight, spectral_gain(dims.d_v)),
        (&mut p.proj_t.weight, spectral_gain(dims.d_t)),
        (&mut p.gate.weight, 1.0),
        (&mut p.proj_k.weight, 1.0),
    ];
    for (w, gain) in weights {
        let a = xavier_bound(w.cols(), w.rows()) / gain;
        for x in w.as_mut_slice() {
            *x = rng.uniform(-a, a);
        }
    }
    Ok(p)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Frozen per-sample inputs to the trainable part of the model.
#[derive(Clone, Copy, Debug)]
pub struct ModelInputs<'a> {
    pub v_feat: &'a [f64],
    pub t_feat: &'a [f64],
    pub k_agg: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    p_v: Vec<f64>,
    p_t: Vec<f64>,
    /// `[h ‖ p_k]`
    joint: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Gate activations; all 1 in concat mode, where the gate is bypassed.
    pub gate: Vec<f64>,
    pub cache: Option<ForwardCache>,
}

impl Prediction {
    pub fn predicted_class(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

fn check_finite(context: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation(context))
    }
}

pub fn forward(p: &ModelParams, mode: FusionMode, x: ModelInputs<'_>) -> Result<Prediction> {
    let p_v = p.proj_v.project(x.v_feat)?;
    let p_t = p.proj_t.project(x.t_feat)?;
    let p_k = p.proj_k.project(x.k_agg)?;
    check_finite("image projection", &p_v)?;
    check_finite("text projection", &p_t)?;
    check_finite("knowledge projection", &p_k)?;
    let (h, gate) = match mode {
        FusionMode::Gated => {
            let out = gated_fuse(&p.gate, &p_v, &p_t)?;
            (out.fused, out.gate)
        }
        FusionMode::Concat => (
            p_v.iter().zip(&p_t).map(|(a, b)| a + b).collect(),
            vec![1.0; p_v.len()],
        ),
    };
    let mut joint = h;
    joint.extend_from_slice(&p_k);
    let logits = p.head.project(&joint)?;
    check_finite("logits", &logits)?;
    let probs = softmax(&logits);
    Ok(Prediction {
        logits,
        probs,
        gate,
        cache: Some(ForwardCache { p_v, p_t, joint }),
    })
}

/// Adds `scale · ∂loss/∂θ` into `grads`, given `dlogits = ∂loss/∂logits`.
///
/// Inputs are treated as constants: no gradient reaches the embeddings, the
/// spectra or the retrieved context.
pub fn backward_into(
    p: &ModelParams,
    mode: FusionMode,
    pred: &Prediction,
    dlogits: &[f64],
    x: ModelInputs<'_>,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let cache = pred
        .cache
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("prediction carries no forward cache".into()))?;
    let d_f = p.proj_v.d_out();
    if dlogits.len() != p.head.d_out() {
        return Err(Error::ShapeMismatch {
            context: "dlogits",
            expected: p.head.d_out(),
            found: dlogits.len(),
        });
    }

    // head
    grads.head.weight.add_outer(scale, dlogits, &cache.joint);
    grads.head.bias.iter_mut().zip(dlogits).for_each(|(g, d)| *g += scale * d);
    let mut djoint = vec![0.0; 2 * d_f];
    p.head.weight.mul_t_vec_acc(dlogits, &mut djoint);
    let (dh, dp_k) = djoint.split_at(d_f);

    // knowledge projection
    grads.proj_k.weight.add_outer(scale, dp_k, x.k_agg);
    grads.proj_k.bias.iter_mut().zip(dp_k).for_each(|(g, d)| *g += scale * d);

    // fusion
    let (dp_v, dp_t) = match mode {
        FusionMode::Concat => (dh.to_vec(), dh.to_vec()),
        FusionMode::Gated => {
            let gate = &pred.gate;
            let mut dp_v: Vec<f64> = dh.iter().zip(gate).map(|(d, g)| d * g).collect();
            let mut dp_t: Vec<f64> = dh.iter().zip(gate).map(|(d, g)| d * (1.0 - g)).collect();
            // through σ: ∂h/∂a = (p_v − p_t)·g(1 − g)
            let da: Vec<f64> = (0..d_f)
                .map(|i| dh[i] * (cache.p_v[i] - cache.p_t[i]) * gate[i] * (1.0 - gate[i]))
                .collect();
            let mut gate_in = cache.p_v.clone();
            gate_in.extend_from_slice(&cache.p_t);
            grads.gate.weight.add_outer(scale, &da, &gate_in);
            grads.gate.bias.iter_mut().zip(&da).for_each(|(g, d)| *g += scale * d);
            let mut dgate_in = vec![0.0; 2 * d_f];
            p.gate.weight.mul_t_vec_acc(&da, &mut dgate_in);
            dp_v.iter_mut().zip(&dgate_in[..d_f]).for_each(|(a, b)| *a += b);
            dp_t.iter_mut().zip(&dgate_in[d_f..]).for_each(|(a, b)| *a += b);
            (dp_v, dp_t)
        }
    };

    grads.proj_v.weight.add_outer(scale, &dp_v, x.v_feat);
    grads.proj_v.bias.iter_mut().zip(&dp_v).for_each(|(g, d)| *g += scale * d);
    grads.proj_t.weight.add_outer(scale, &dp_t, x.t_feat);
    grads.proj_t.bias.iter_mut().zip(&dp_t).for_each(|(g, d)| *g += scale * d);
    Ok(())
}

pub fn backward(
    p: &ModelParams,
    mode: FusionMode,
    pred: &Prediction,
    dlogits: &[f64],
    x: ModelInputs<'_>,
) -> Result<Gradients> {
    let mut g = p.zeros_like();
    backward_into(p, mode, pred, dlogits, x, 1.0, &mut g)?;
    Ok(g)
}
