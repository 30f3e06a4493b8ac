//! Stratified cross-validation and binary classification metrics.
//!
//! Class 1 is the positive class unless stated otherwise.

use std::fmt::Write as _;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    predict_features, train_on_features, FeaturePipeline, ModelParams, SampleFeatures,
    TrainConfig,
};
use crate::data::{KnowledgeBase, SampleSet};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::rng::SplitMix64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts seen with class 0 as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch {
            context: "confusion predictions",
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("label list"));
    }
    let mut m = ConfusionMatrix::default();
    for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        match (t, p) {
            (1, 1) => m.tp += 1,
            (0, 0) => m.tn += 1,
            (0, 1) => m.fp += 1,
            (1, 0) => m.fn_ += 1,
            _ => {
                return Err(Error::InvalidLabel {
                    record: i,
                    label: t.max(p) as i64,
                })
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// A zero denominator was replaced by the 0 convention.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and accuracy for `positive_class`.
pub fn prf1(m: &ConfusionMatrix, positive_class: u8) -> ClassMetrics {
    let m = if positive_class == 0 { m.swapped() } else { *m };
    let mut zero_division = false;
    let precision = ratio(m.tp, m.tp + m.fp, &mut zero_division);
    let recall = ratio(m.tp, m.tp + m.fn_, &mut zero_division);
    let f1 = if precision + recall == 0.0 {
        zero_division = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = ratio(m.tp + m.tn, m.total(), &mut zero_division);
    ClassMetrics {
        precision,
        recall,
        f1,
        accuracy,
        zero_division,
    }
}

/// Mann-Whitney AUC with half credit for ties, from average ranks.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::ShapeMismatch {
            context: "roc_auc scores",
            expected: y_true.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteInput("roc_auc"));
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Doubled ranks keep everything integral: a tie group spanning sorted
    // positions i..=j has average 1-based rank (i + j + 2) / 2.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let pos_in_group = order[i..=j].iter().filter(|&&k| y_true[k] == 1).count() as u64;
        twice_rank_sum += pos_in_group * (i + j + 2) as u64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * np * nn) as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Shuffles each class with a seeded generator and deals it round-robin.
/// Dealing continues across classes so fold sizes stay within one of each
/// other as well.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = SplitMix64::new(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::InsufficientClass {
                class,
                count: idx.len(),
                required: k,
            });
        }
        rng.shuffle(&mut idx);
        for i in idx {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::InvalidLabel {
            record: i,
            label: labels[i] as i64,
        });
    }
    Ok(FoldAssignment { k, fold_of })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub confusion: ConfusionMatrix,
    pub zero_division: bool,
}

/// Scores a model on prepared features. AUC requires both classes.
pub fn evaluate(
    params: &ModelParams,
    features: &[SampleFeatures],
    labels: &[u8],
    mode: FusionMode,
) -> Result<EvalMetrics> {
    let mut probs = Vec::with_capacity(features.len());
    let mut preds = Vec::with_capacity(features.len());
    for f in features {
        let (p1, pred) = predict_features(params, f, mode)?;
        probs.push(p1);
        preds.push(pred.predicted_class() as u8);
    }
    let m = confusion(labels, &preds)?;
    let c = prf1(&m, 1);
    Ok(EvalMetrics {
        accuracy: c.accuracy,
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        roc_auc: roc_auc(labels, &probs)?,
        confusion: m,
        zero_division: c.zero_division,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// 1-based fold number.
    pub fold: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub confusion: ConfusionMatrix,
    pub support: usize,
    /// Final-epoch accuracy on the training folds.
    pub train_accuracy: f64,
    pub zero_division: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub folds: Vec<FoldReport>,
    pub average: AverageReport,
    pub config: TrainConfig,
}

impl CVReport {
    fn from_folds(folds: Vec<FoldReport>, config: TrainConfig) -> Self {
        let n = folds.len() as f64;
        let mean = |f: fn(&FoldReport) -> f64| folds.iter().map(f).sum::<f64>() / n;
        let average = AverageReport {
            accuracy: mean(|f| f.accuracy),
            precision: mean(|f| f.precision),
            recall: mean(|f| f.recall),
            f1: mean(|f| f.f1),
            roc_auc: mean(|f| f.roc_auc),
            train_accuracy: mean(|f| f.train_accuracy),
        };
        Self {
            folds,
            average,
            config,
        }
    }

    pub fn pooled_confusion(&self) -> ConfusionMatrix {
        self.folds
            .iter()
            .fold(ConfusionMatrix::default(), |acc, f| acc + f.confusion)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn run_fold(
    fold: usize,
    assignment: &FoldAssignment,
    features: &[SampleFeatures],
    labels: &[u8],
    dims: (usize, usize, usize),
    cfg: &TrainConfig,
) -> Result<FoldReport> {
    let (d_k, d_t, d_v) = dims;
    let train_idx = assignment.complement(fold);
    let test_idx = assignment.members(fold);
    let pick = |idx: &[usize]| -> (Vec<SampleFeatures>, Vec<u8>) {
        (
            idx.iter().map(|&i| features[i].clone()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_x, train_y) = pick(&train_idx);
    let (test_x, test_y) = pick(&test_idx);
    let fold_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(fold as u64),
        ..cfg.clone()
    };
    let (params, history) = train_on_features(&train_x, &train_y, d_k, d_t, d_v, &fold_cfg)?;
    let m = evaluate(&params, &test_x, &test_y, cfg.fusion_mode)?;
    Ok(FoldReport {
        fold: fold + 1,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        roc_auc: m.roc_auc,
        confusion: m.confusion,
        support: test_y.len(),
        train_accuracy: history.final_accuracy(),
        zero_division: m.zero_division,
    })
}

/// Stratified `k`-fold cross-validation.
///
/// Features and retrieval are computed once for every sample. Fold `f`
/// trains with seed `cfg.seed + f`; up to `jobs` folds run concurrently and
/// the report is assembled in fold order, so the result does not depend on
/// `jobs`.
pub fn cross_validate(
    data: &SampleSet,
    kb: &KnowledgeBase,
    cfg: &TrainConfig,
    k: usize,
    jobs: usize,
) -> Result<CVReport> {
    cfg.validate()?;
    data.validate()?;
    kb.validate()?;
    let labels = data.labels();
    let assignment = stratified_folds(&labels, k, cfg.seed)?;
    let pipeline = FeaturePipeline::new(kb, cfg, data.d_t, data.d_v)?;
    let features = pipeline.features_all(data)?;
    let dims = (kb.d_k, data.d_t, data.d_v);

    let jobs = jobs.clamp(1, k);
    let mut reports = Vec::with_capacity(k);
    for wave in (0..k).collect::<Vec<_>>().chunks(jobs) {
        let results: Vec<Result<FoldReport>> = if wave.len() == 1 {
            vec![run_fold(wave[0], &assignment, &features, &labels, dims, cfg)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&fold| {
                        let (a, f, l) = (&assignment, &features, &labels);
                        s.spawn(move || run_fold(fold, a, f, l, dims, cfg))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("fold worker panicked"))
                    .collect()
            })
        };
        for r in results {
            reports.push(r?);
        }
    }
    Ok(CVReport::from_folds(reports, cfg.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

pub fn report(r: &CVReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r)?;
            s.push('\n');
            s
        }
        ReportFormat::Text => render_text(r),
        ReportFormat::Csv => render_csv(r),
    })
}

fn render_text(r: &CVReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6}{:>10}{:>11}{:>9}{:>10}{:>9}{:>11}",
        "Fold", "Accuracy", "Precision", "Recall", "F1-Score", "ROC-AUC", "Train-Acc"
    );
    let row = |s: &mut String, name: &str, v: [f64; 6]| {
        let _ = writeln!(
            s,
            "{:<6}{:>10.4}{:>11.4}{:>9.4}{:>10.4}{:>9.4}{:>11.4}",
            name, v[0], v[1], v[2], v[3], v[4], v[5]
        );
    };
    for f in &r.folds {
        row(
            &mut s,
            &f.fold.to_string(),
            [f.accuracy, f.precision, f.recall, f.f1, f.roc_auc, f.train_accuracy],
        );
    }
    let a = &r.average;
    row(
        &mut s,
        "Avg",
        [a.accuracy, a.precision, a.recall, a.f1, a.roc_auc, a.train_accuracy],
    );
    let m = r.pooled_confusion();
    let _ = writeln!(
        s,
        "\nPooled confusion: TN={} FP={} FN={} TP={}",
        m.tn, m.fp, m.fn_, m.tp
    );
    for (class, c) in [(0u8, prf1(&m, 0)), (1u8, prf1(&m, 1))] {
        let _ = writeln!(
            s,
            "Class {class}: precision={:.4} recall={:.4} f1={:.4}",
            c.precision, c.recall, c.f1
        );
    }
    s
}

fn render_csv(r: &CVReport) -> String {
    let mut s = String::from("fold,accuracy,precision,recall,f1,roc_auc,train_accuracy\n");
    for f in &r.folds {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            f.fold, f.accuracy, f.precision, f.recall, f.f1, f.roc_auc, f.train_accuracy
        );
    }
    let a = &r.average;
    let _ = writeln!(
        s,
        "avg,{},{},{},{},{},{}",
        a.accuracy, a.precision, a.recall, a.f1, a.roc_auc, a.train_accuracy
    );
    s
}

/// `fold,tp,tn,fp,fn`, one row per fold.
pub fn confusion_csv(r: &CVReport) -> String {
    let mut s = String::from("fold,tp,tn,fp,fn\n");
    for f in &r.folds {
        let m = f.confusion;
        let _ = writeln!(s, "{},{},{},{},{}", f.fold, m.tp, m.tn, m.fp, m.fn_);
    }
    s
}
