//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use qfsru::classifier::{focal_loss, forward, FocalParams, ModelDims, ModelInputs, ModelParams};
use qfsru::data::{KnowledgeBase, KnowledgeEntry};
use qfsru::fusion::FusionMode;
use qfsru::retrieval::{amplitude_encode, cosine_similarity, quantum_similarity, Metric};
use qfsru::rng::SplitMix64;

/// Direct O(n²) DFT, half spectrum. The exponent jk is reduced mod n and
/// looked up in a table of exactly computed twiddles.
pub fn direct_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let table: Vec<(f64, f64)> = (0..n)
        .map(|m| {
            let angle = -2.0 * PI * m as f64 / n as f64;
            (angle.cos(), angle.sin())
        })
        .collect();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in x.iter().enumerate() {
                let (c, s) = table[(j * k) % n];
                re += v * c;
                im += v * s;
            }
            (re, im)
        })
        .collect()
}

pub fn uniform_vec(rng: &mut SplitMix64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

pub fn gaussian_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gaussian()).collect()
}

/// Random knowledge base; with `quantized` the keys take few distinct values
/// so exact score ties are common.
pub fn random_kb(rng: &mut SplitMix64, n: usize, d: usize, quantized: bool) -> KnowledgeBase {
    let entries = (0..n)
        .map(|i| {
            let key_emb: Vec<f32> = loop {
                let v: Vec<f32> = (0..d)
                    .map(|_| {
                        if quantized {
                            rng.below(3) as f32 - 1.0
                        } else {
                            rng.gaussian() as f32
                        }
                    })
                    .collect();
                if v.iter().any(|&x| x != 0.0) {
                    break v;
                }
            };
            KnowledgeEntry {
                id: format!("k{i}"),
                key_emb,
                payload: format!("entry {i}"),
            }
        })
        .collect();
    KnowledgeBase { d_k: d, entries }
}

/// Scores every key, sorts all of them, keeps the first k.
pub fn brute_force_top_k(query: &[f64], kb: &KnowledgeBase, k: usize, metric: Metric) -> Vec<(usize, f64)> {
    let q = amplitude_encode(query).unwrap();
    let mut all: Vec<(usize, f64)> = kb
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let key: Vec<f64> = e.key_emb.iter().map(|&x| x as f64).collect();
            let s = match metric {
                Metric::Quantum => quantum_similarity(&q, &amplitude_encode(&key).unwrap()).unwrap(),
                Metric::Cosine => cosine_similarity(q.amplitudes(), &key).unwrap(),
            };
            (i, s + 0.0)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// AUC by counting every positive/negative pair; ties count one half.
pub fn pair_count_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut twice_wins = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice_wins += 2;
            } else if scores[i] == scores[j] {
                twice_wins += 1;
            }
        }
    }
    twice_wins as f64 / (2 * pairs) as f64
}

pub fn reference_cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].ln()
}

/// Random probability vector with entries bounded away from zero.
pub fn random_probs(rng: &mut SplitMix64, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.uniform(0.01, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn small_dims() -> ModelDims {
    ModelDims {
        d_v: 6,
        d_t: 4,
        d_f: 3,
        d_k: 5,
        classes: 2,
    }
}

/// Every parameter drawn from N(0, scale²).
pub fn random_params(dims: ModelDims, rng: &mut SplitMix64, scale: f64) -> ModelParams {
    let mut p = ModelParams::zeros(dims);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|x| *x = scale * rng.gaussian());
    }
    p
}

pub fn loss_at(p: &ModelParams, mode: FusionMode, x: ModelInputs<'_>, label: usize, fp: &FocalParams) -> f64 {
    let pred = forward(p, mode, x).unwrap();
    focal_loss(&pred.probs, label, fp).unwrap().loss
}

/// Central finite differences of the loss for every parameter, per tensor.
pub fn numeric_gradient(
    p: &ModelParams,
    mode: FusionMode,
    x: ModelInputs<'_>,
    label: usize,
    fp: &FocalParams,
    h: f64,
) -> Vec<Vec<f64>> {
    let mut work = p.clone();
    let mut out = Vec::new();
    for t in 0..10 {
        let len = p.tensors()[t].len();
        let mut g = vec![0.0; len];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = p.tensors()[t][i];
            work.tensors_mut()[t][i] = orig + h;
            let up = loss_at(&work, mode, x, label, fp);
            work.tensors_mut()[t][i] = orig - h;
            let down = loss_at(&work, mode, x, label, fp);
            work.tensors_mut()[t][i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Per-class fold counts, `counts[fold][class]`.
pub fn fold_class_counts(labels: &[u8], fold_of: &[usize], k: usize) -> Vec<[usize; 2]> {
    let mut counts = vec![[0usize; 2]; k];
    for (&y, &f) in labels.iter().zip(fold_of) {
        counts[f][y as usize] += 1;
    }
    counts
}

pub fn random_labels(rng: &mut SplitMix64, n: usize, p1: f64) -> Vec<u8> {
    (0..n).map(|_| (rng.next_f64() < p1) as u8).collect()
}
