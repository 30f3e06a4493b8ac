use std::f64::consts::PI;

use super::model::{Gradients, ModelParams, TENSOR_NAMES};
use crate::error::{Error, Result};

/// Adam moment estimates for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
        if params.shapes() != grads.shapes() {
            return Err(Error::InvalidConfig("gradient shapes do not match parameters".into()));
        }
        for (name, g) in TENSOR_NAMES.iter().zip(grads.tensors()) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: name });
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let eps = self.eps;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `lr_min + ½(lr0 − lr_min)(1 + cos(π·epoch/total))`
pub fn cosine_anneal(epoch: usize, total_epochs: usize, lr0: f64, lr_min: f64) -> f64 {
    if total_epochs == 0 {
        return lr0;
    }
    let frac = epoch.min(total_epochs) as f64 / total_epochs as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::model::ModelDims;

    fn tiny() -> ModelParams {
        ModelParams::zeros(ModelDims {
            d_v: 1,
            d_t: 1,
            d_f: 1,
            d_k: 1,
            classes: 2,
        })
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_anneal(0, 30, 1e-4, 0.0), 1e-4);
        assert!(cosine_anneal(30, 30, 1e-4, 1e-6) - 1e-6 < 1e-20);
        assert!((cosine_anneal(15, 30, 1e-4, 2e-5) - 6e-5).abs() < 1e-18);
        let lrs: Vec<f64> = (0..=30).map(|e| cosine_anneal(e, 30, 1.0, 0.0)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn first_step_is_sign_step() {
        let mut p = tiny();
        let mut g = tiny();
        g.head.bias = vec![3.5, -0.02];
        let mut adam = AdamState::new(&p);
        let lr = 1e-3;
        adam.step(&mut p, &g, lr).unwrap();
        assert!((p.head.bias[0] + lr).abs() < lr * 1e-6);
        assert!((p.head.bias[1] - lr).abs() < lr * 1e-6);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = tiny();
        p.proj_v.bias = vec![0.7];
        let before = p.clone();
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &tiny(), 0.1).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = tiny();
        let mut g = tiny();
        g.gate.weight.as_mut_slice()[1] = f64::NAN;
        let mut adam = AdamState::new(&p);
        match adam.step(&mut p, &g, 0.1) {
            Err(Error::NonFiniteGradient { tensor }) => assert_eq!(tensor, "gate.weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn minimizes_square() {
        // f(w) = w², ∂f/∂w = 2w, driven through the head bias slot
        let mut p = tiny();
        p.head.bias[0] = 1.0;
        let mut adam = AdamState::new(&p);
        for _ in 0..100 {
            let mut g = tiny();
            g.head.bias[0] = 2.0 * p.head.bias[0];
            adam.step(&mut p, &g, 0.1).unwrap();
        }
        assert!(p.head.bias[0].abs() < 0.5, "w = {}", p.head.bias[0]);
    }
}
