use serde::{Deserialize, Serialize};

use super::{KnowledgeBase, KnowledgeEntry, Sample, SampleSet};
use super::{DEFAULT_IMAGE_DIM, DEFAULT_KEY_DIM, DEFAULT_TEXT_DIM};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::SplitMix64;

/// Parameters of the two-class gaussian generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub d_t: usize,
    pub d_v: usize,
    pub d_k: usize,
    pub n_knowledge: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            d_t: DEFAULT_TEXT_DIM,
            d_v: DEFAULT_IMAGE_DIM,
            d_k: DEFAULT_KEY_DIM,
            n_knowledge: 20,
            class_separation: 8.0,
            noise_sigma: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2 so both classes are present");
        }
        if self.d_t < 2 || self.d_v < 2 || self.d_k < 2 {
            return bad("embedding dimensions must be at least 2");
        }
        // Keys live in the text-encoder space so that raw text queries are comparable.
        if self.d_k != self.d_t {
            return bad("d_k must equal d_t for synthetic knowledge keys");
        }
        if self.n_knowledge < 2 {
            return bad("n_knowledge must be at least 2 (one prototype per class)");
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return bad("class_separation must be finite and nonnegative");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return bad("noise_sigma must be finite and positive");
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gaussian()).collect()
}

/// Class means for one modality: `base ± sep/2 · u` with `base ⟂ u`, so both
/// means have the same norm and sit at distance `sep`.
fn class_means(rng: &mut SplitMix64, d: usize, sep: f64, sigma: f64) -> [Vec<f64>; 2] {
    let mut u = gaussian_vec(rng, d);
    let nu = norm(&u);
    u.iter_mut().for_each(|x| *x /= nu);

    let mut base = gaussian_vec(rng, d);
    let proj = dot(&base, &u);
    base.iter_mut().zip(&u).for_each(|(b, ui)| *b -= proj * ui);
    let scale = (2.0 * sep + 4.0 * sigma) / norm(&base);
    base.iter_mut().for_each(|b| *b *= scale);

    let mean = |sign: f64| -> Vec<f64> {
        base.iter()
            .zip(&u)
            .map(|(b, ui)| b + sign * 0.5 * sep * ui)
            .collect()
    };
    [mean(-1.0), mean(1.0)]
}

fn jitter(rng: &mut SplitMix64, mean: &[f64], sigma: f64) -> Vec<f32> {
    mean.iter()
        .map(|m| (m + sigma * rng.gaussian()) as f32)
        .collect()
}

/// Generates a labelled dataset and a matching knowledge base.
///
/// Labels alternate `0, 1, 0, ...`. The knowledge base starts with
/// `max(1, n_knowledge / 4)` prototype keys per class (near the class text
/// mean, payload naming the class) followed by random distractor keys.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<(SampleSet, KnowledgeBase)> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let sep = cfg.class_separation;
    let sigma = cfg.noise_sigma;

    let text_means = class_means(&mut rng, cfg.d_t, sep, sigma);
    let image_means = class_means(&mut rng, cfg.d_v, sep, sigma);

    let samples = (0..cfg.n_samples)
        .map(|i| {
            let label = (i % 2) as u8;
            let text_emb = jitter(&mut rng, &text_means[label as usize], sigma);
            let image_emb = jitter(&mut rng, &image_means[label as usize], sigma);
            Sample {
                id: format!("s{i:05}"),
                label,
                text_emb,
                image_emb,
            }
        })
        .collect();

    let per_class = (cfg.n_knowledge / 4).max(1);
    let mut entries = Vec::with_capacity(cfg.n_knowledge);
    for j in 0..2 * per_class {
        let class = j % 2;
        entries.push(KnowledgeEntry {
            id: format!("proto-{class}-{}", j / 2),
            key_emb: jitter(&mut rng, &text_means[class], 0.1 * sigma),
            payload: format!("class {class} prototype"),
        });
    }
    for j in 0..cfg.n_knowledge - 2 * per_class {
        entries.push(KnowledgeEntry {
            id: format!("distractor-{j}"),
            key_emb: gaussian_vec(&mut rng, cfg.d_k)
                .into_iter()
                .map(|x| x as f32)
                .collect(),
            payload: format!("distractor {j}"),
        });
    }

    let set = SampleSet {
        d_t: cfg.d_t,
        d_v: cfg.d_v,
        samples,
    };
    let kb = KnowledgeBase {
        d_k: cfg.d_k,
        entries,
    };
    set.validate()?;
    kb.validate()?;
    Ok((set, kb))
}
