//! Combining the two modality spectra into one representation.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Affine map `x ↦ W·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ProjectionParams {
    pub fn zeros(d_out: usize, d_in: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_out, d_in),
            bias: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::ShapeMismatch {
                context: "projection input",
                expected: self.d_in(),
                found: x.len(),
            });
        }
        let mut out = self.weight.mul_vec(x);
        out.iter_mut().zip(&self.bias).for_each(|(o, b)| *o += b);
        Ok(out)
    }
}

/// Per-dimension sigmoid gate over the concatenated projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    pub fn zeros(d_f: usize) -> Self {
        Self {
            weight: Matrix::zeros(d_f, 2 * d_f),
            bias: vec![0.0; d_f],
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Sigmoid-gated convex combination of the projected modalities.
    #[default]
    Gated,
    /// A single linear projection of the concatenated spectra; the gate is unused.
    Concat,
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(FusionMode::Gated),
            "concat" => Ok(FusionMode::Concat),
            other => Err(Error::InvalidConfig(format!("unknown fusion mode {other:?}"))),
        }
    }
}

pub fn concat_fuse(v_freq: &[f64], t_freq: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v_freq.len() + t_freq.len());
    out.extend_from_slice(v_freq);
    out.extend_from_slice(t_freq);
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Output of [`gated_fuse`].
#[derive(Clone, Debug, PartialEq)]
pub struct GatedOutput {
    pub fused: Vec<f64>,
    pub gate: Vec<f64>,
}

/// `gate = σ(W_g·[p_v ‖ p_t] + b_g)`, `fused = gate ⊙ p_v + (1 − gate) ⊙ p_t`.
pub fn gated_fuse(g: &GateParams, p_v: &[f64], p_t: &[f64]) -> Result<GatedOutput> {
    let d_f = g.dim();
    for (context, len) in [("gate image input", p_v.len()), ("gate text input", p_t.len())] {
        if len != d_f {
            return Err(Error::ShapeMismatch {
                context,
                expected: d_f,
                found: len,
            });
        }
    }
    if p_v.iter().chain(p_t).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("gated_fuse"));
    }
    let joint = concat_fuse(p_v, p_t);
    let mut gate = g.weight.mul_vec(&joint);
    gate.iter_mut()
        .zip(&g.bias)
        .for_each(|(a, b)| *a = sigmoid(*a + b));
    let fused = gate
        .iter()
        .zip(p_v.iter().zip(p_t))
        .map(|(&s, (&v, &t))| (t + s * (v - t)).clamp(v.min(t), v.max(t)))
        .collect();
    Ok(GatedOutput { fused, gate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_examples() {
        assert_eq!(concat_fuse(&[1.0, 2.0], &[3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(concat_fuse(&[4.0, 5.0], &[]), vec![4.0, 5.0]);
        assert_eq!(concat_fuse(&vec![0.0; 2050], &vec![0.0; 1026]).len(), 3076);
    }

    #[test]
    fn projection_cases() {
        let x = [0.3, -1.2, 2.0];
        let id = ProjectionParams {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        assert_eq!(id.project(&x).unwrap(), x.to_vec());

        let mut constant = ProjectionParams::zeros(2, 3);
        constant.bias = vec![1.5, 1.5];
        assert_eq!(constant.project(&x).unwrap(), vec![1.5, 1.5]);

        // W = [[1, 2], [3, 4], [5, 6]], b = [0.5, -1, 0], x = [2, -1]
        let p = ProjectionParams {
            weight: Matrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]),
            bias: vec![0.5, -1.0, 0.0],
        };
        assert_eq!(p.project(&[2.0, -1.0]).unwrap(), vec![0.5, 1.0, 4.0]);
        assert!(p.project(&[1.0]).is_err());
    }

    #[test]
    fn gate_at_zero_is_half() {
        let g = GateParams::zeros(3);
        let out = gated_fuse(&g, &[1.0, 2.0, 3.0], &[3.0, 0.0, -3.0]).unwrap();
        assert_eq!(out.gate, vec![0.5; 3]);
        assert_eq!(out.fused, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn saturated_gate_selects_image() {
        let mut g = GateParams::zeros(2);
        g.bias = vec![40.0; 2];
        let out = gated_fuse(&g, &[1.0, -2.0], &[5.0, 7.0]).unwrap();
        assert!((out.fused[0] - 1.0).abs() < 1e-12);
        assert!((out.fused[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_inputs_pass_through() {
        let mut g = GateParams::zeros(2);
        g.weight = Matrix::from_vec(2, 4, vec![0.3, -0.7, 1.1, 0.2, -2.0, 0.1, 0.4, 0.9]);
        let p = [0.1 + 0.2, -3.7];
        assert_eq!(gated_fuse(&g, &p, &p).unwrap().fused, p.to_vec());
        assert!(gated_fuse(&g, &p, &[1.0]).is_err());
    }

    #[test]
    fn sigmoid_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
