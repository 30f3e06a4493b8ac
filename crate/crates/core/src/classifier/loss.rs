use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-15;

/// Softmax with max-subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Focal loss hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    /// One weight per class.
    pub alpha: Vec<f64>,
    /// Label smoothing.
    pub epsilon: f64,
}

impl FocalParams {
    pub fn cross_entropy(classes: usize) -> Self {
        Self {
            gamma: 0.0,
            alpha: vec![1.0; classes],
            epsilon: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FocalLoss {
    pub loss: f64,
    /// Gradient of `loss` with respect to the logits that produced `probs`.
    pub dlogits: Vec<f64>,
    /// Some probability fell below the log floor and was clamped.
    pub saturated: bool,
}

/// `−Σ_c α_c (1 − p_c)^γ ỹ_c log p_c` with `ỹ = (1 − ε)·onehot + ε/C`.
pub fn focal_loss(probs: &[f64], label: usize, params: &FocalParams) -> Result<FocalLoss> {
    let classes = probs.len();
    if label >= classes {
        return Err(Error::IndexOutOfRange {
            index: label,
            len: classes,
        });
    }
    if params.alpha.len() != classes {
        return Err(Error::ShapeMismatch {
            context: "focal alpha",
            expected: classes,
            found: params.alpha.len(),
        });
    }
    let gamma = params.gamma;
    let eps = params.epsilon;
    let mut loss = 0.0;
    let mut saturated = false;
    // q_c = p_c · ∂loss/∂p_c, which avoids dividing by p_c
    let mut q = vec![0.0; classes];
    for c in 0..classes {
        let target = if c == label { 1.0 - eps } else { 0.0 } + eps / classes as f64;
        if target == 0.0 || params.alpha[c] == 0.0 {
            continue;
        }
        let p = probs[c];
        if p < LOG_FLOOR {
            saturated = true;
        }
        let log_p = p.max(LOG_FLOOR).ln();
        let one_minus = 1.0 - p;
        let w = params.alpha[c] * target;
        let focal = if gamma == 0.0 { 1.0 } else { one_minus.powf(gamma) };
        loss -= w * focal * log_p;

        // d/dp[(1−p)^γ log p] = −γ(1−p)^(γ−1) log p + (1−p)^γ / p
        let focal_slope = if gamma == 0.0 || one_minus <= 0.0 {
            0.0
        } else {
            gamma * p * one_minus.powf(gamma - 1.0) * log_p
        };
        q[c] = -w * (focal - focal_slope);
    }
    let q_sum: f64 = q.iter().sum();
    let dlogits = (0..classes).map(|j| q[j] - probs[j] * q_sum).collect();
    Ok(FocalLoss {
        loss,
        dlogits,
        saturated,
    })
}
