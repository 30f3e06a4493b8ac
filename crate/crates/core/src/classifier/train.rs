use serde::{Deserialize, Serialize};

use super::loss::{focal_loss, FocalParams};
use super::model::{
    backward_into, forward, init_params, ModelDims, ModelInputs, ModelParams, Prediction,
    NUM_CLASSES,
};
use super::optim::{cosine_anneal, AdamState};
use crate::data::{KnowledgeBase, Sample, SampleSet};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::retrieval::{Metric, QueryMode, RetrievedContext, Retriever, TopkWeighting};
use crate::rng::SplitMix64;
use crate::spectral::{freq_feature_len, to_freq_feature};

const SHUFFLE_STREAM: u64 = 0x5348_5546_464c_4521;

/// Per-class loss weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    #[default]
    Uniform,
    /// `N / (C · n_c)` from the training labels.
    InverseFrequency,
    Fixed(Vec<f64>),
}

impl std::str::FromStr for AlphaMode {
    type Err = Error;

    /// `uniform`, `inverse`, or comma-separated weights such as `1,3`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(AlphaMode::Uniform),
            "inverse" | "inverse_frequency" => Ok(AlphaMode::InverseFrequency),
            list => list
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(AlphaMode::Fixed)
                .map_err(|_| Error::InvalidConfig(format!("invalid alpha {s:?}"))),
        }
    }
}

impl AlphaMode {
    pub fn weights(&self, labels: &[u8]) -> Vec<f64> {
        match self {
            AlphaMode::Uniform => vec![1.0; NUM_CLASSES],
            AlphaMode::Fixed(w) => w.clone(),
            AlphaMode::InverseFrequency => (0..NUM_CLASSES)
                .map(|c| {
                    let n_c = labels.iter().filter(|&&l| l as usize == c).count();
                    if n_c == 0 {
                        0.0
                    } else {
                        labels.len() as f64 / (NUM_CLASSES * n_c) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_min: f64,
    pub gamma: f64,
    pub alpha: AlphaMode,
    pub epsilon: f64,
    pub seed: u64,
    pub fusion_mode: FusionMode,
    pub metric: Metric,
    pub top_k: usize,
    pub topk_weighting: TopkWeighting,
    pub query_mode: QueryMode,
    pub proj_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr0: 1e-4,
            lr_min: 0.0,
            gamma: 2.0,
            alpha: AlphaMode::Uniform,
            epsilon: 0.1,
            seed: 42,
            fusion_mode: FusionMode::Gated,
            metric: Metric::Quantum,
            top_k: 5,
            topk_weighting: TopkWeighting::Uniform,
            query_mode: QueryMode::Text,
            proj_dim: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr0));
        }
        if !(self.lr_min.is_finite() && self.lr_min >= 0.0 && self.lr_min <= self.lr0) {
            return bad(format!("lr_min must lie in [0, lr], got {}", self.lr_min));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad(format!("label smoothing must lie in [0, 1), got {}", self.epsilon));
        }
        if let AlphaMode::Fixed(w) = &self.alpha {
            if w.len() != NUM_CLASSES || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad(format!("alpha needs {NUM_CLASSES} nonnegative weights, got {w:?}"));
            }
        }
        if self.top_k == 0 {
            return bad("top-k must be at least 1".into());
        }
        if self.proj_dim == 0 {
            return bad("projection width must be at least 1".into());
        }
        Ok(())
    }

    pub fn focal_params(&self, labels: &[u8]) -> FocalParams {
        FocalParams {
            gamma: self.gamma,
            alpha: self.alpha.weights(labels),
            epsilon: self.epsilon,
        }
    }

    pub fn model_dims(&self, d_t: usize, d_v: usize, d_k: usize) -> ModelDims {
        ModelDims {
            d_v: freq_feature_len(d_v),
            d_t: freq_feature_len(d_t),
            d_f: self.proj_dim,
            d_k,
            classes: NUM_CLASSES,
        }
    }
}

/// Turns raw samples into model inputs: spectra of both embeddings plus the
/// retrieved knowledge context.
pub struct FeaturePipeline<'a> {
    retriever: Retriever<'a>,
    d_t: usize,
    d_v: usize,
}

/// Frozen inputs for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFeatures {
    pub v_feat: Vec<f64>,
    pub t_feat: Vec<f64>,
    pub context: RetrievedContext,
}

impl SampleFeatures {
    pub fn inputs(&self) -> ModelInputs<'_> {
        ModelInputs {
            v_feat: &self.v_feat,
            t_feat: &self.t_feat,
            k_agg: &self.context.k_agg,
        }
    }
}

impl<'a> FeaturePipeline<'a> {
    pub fn new(kb: &'a KnowledgeBase, cfg: &TrainConfig, d_t: usize, d_v: usize) -> Result<Self> {
        if cfg.query_mode == QueryMode::Text && kb.d_k != d_t {
            return Err(Error::ShapeMismatch {
                context: "text query against knowledge keys",
                expected: kb.d_k,
                found: d_t,
            });
        }
        let retriever = Retriever::new(
            kb,
            cfg.metric,
            cfg.top_k,
            cfg.topk_weighting,
            cfg.query_mode,
            freq_feature_len(d_v) + freq_feature_len(d_t),
            cfg.seed,
        )?;
        Ok(Self { retriever, d_t, d_v })
    }

    pub fn features(&self, sample: &Sample) -> Result<SampleFeatures> {
        for (context, expected, found) in [
            ("sample text embedding", self.d_t, sample.text_emb.len()),
            ("sample image embedding", self.d_v, sample.image_emb.len()),
        ] {
            if expected != found {
                return Err(Error::ShapeMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        let text = sample.text_f64();
        let v_feat = to_freq_feature(&sample.image_f64())?;
        let t_feat = to_freq_feature(&text)?;
        let context = self.retriever.retrieve(&text, &v_feat, &t_feat)?;
        Ok(SampleFeatures {
            v_feat,
            t_feat,
            context,
        })
    }

    pub fn features_all(&self, set: &SampleSet) -> Result<Vec<SampleFeatures>> {
        set.samples.iter().map(|s| self.features(s)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    /// Accuracy of the predictions made while the epoch was being trained.
    pub train_accuracy: f64,
    /// Samples whose loss hit the log-probability floor.
    pub saturated: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.train_accuracy)
    }
}

fn check_trainable(data: &SampleSet, kb: &KnowledgeBase) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if kb.is_empty() {
        return Err(Error::Empty("knowledge base"));
    }
    for class in 0..NUM_CLASSES as u8 {
        if !data.samples.iter().any(|s| s.label == class) {
            return Err(Error::InsufficientClass {
                class,
                count: 0,
                required: 1,
            });
        }
    }
    Ok(())
}

/// Trains a fresh model. Deterministic in `(data, kb, cfg)`.
pub fn train(data: &SampleSet, kb: &KnowledgeBase, cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    data.validate()?;
    kb.validate()?;
    check_trainable(data, kb)?;
    let pipeline = FeaturePipeline::new(kb, cfg, data.d_t, data.d_v)?;
    let features = pipeline.features_all(data)?;
    let labels = data.labels();
    train_on_features(&features, &labels, kb.d_k, data.d_t, data.d_v, cfg)
}

/// Training loop over precomputed features.
pub fn train_on_features(
    features: &[SampleFeatures],
    labels: &[u8],
    d_k: usize,
    d_t: usize,
    d_v: usize,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Empty("training features"));
    }
    let focal = cfg.focal_params(labels);
    let mut params = init_params(cfg.model_dims(d_t, d_v, d_k), cfg.seed)?;
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(&params);
    let mut rng = SplitMix64::new(cfg.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let lr = cosine_anneal(epoch, cfg.epochs, cfg.lr0, cfg.lr_min);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut saturated = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = features[i].inputs();
                let label = labels[i] as usize;
                let pred = forward(&params, cfg.fusion_mode, x).map_err(|e| match e {
                    Error::NonFiniteActivation(_) => Error::Divergence {
                        epoch,
                        batch: batch_idx,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                let l = focal_loss(&pred.probs, label, &focal)?;
                if !l.loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: batch_idx,
                        loss: l.loss,
                    });
                }
                loss_sum += l.loss;
                saturated += l.saturated as usize;
                correct += (pred.predicted_class() == label) as usize;
                backward_into(&params, cfg.fusion_mode, &pred, &l.dlogits, x, scale, &mut grads)?;
            }
            adam.step(&mut params, &grads, lr)?;
        }
        history.epochs.push(EpochStats {
            epoch,
            lr,
            mean_loss: loss_sum / features.len() as f64,
            train_accuracy: correct as f64 / features.len() as f64,
            saturated,
        });
    }
    Ok((params, history))
}

/// Class-1 probability and the full prediction for one sample.
pub fn predict(
    params: &ModelParams,
    sample: &Sample,
    pipeline: &FeaturePipeline<'_>,
    mode: FusionMode,
) -> Result<(f64, Prediction)> {
    let f = pipeline.features(sample)?;
    predict_features(params, &f, mode)
}

pub fn predict_features(
    params: &ModelParams,
    features: &SampleFeatures,
    mode: FusionMode,
) -> Result<(f64, Prediction)> {
    let pred = forward(params, mode, features.inputs())?.without_cache();
    Ok((pred.probs[1], pred))
}
