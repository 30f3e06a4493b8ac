mod common;

use common::*;
use proptest::prelude::*;
use qfsru::classifier::TrainConfig;
use qfsru::data::{synth_dataset, SynthConfig};
use qfsru::evaluation::*;
use qfsru::rng::SplitMix64;

#[test]
fn reference_confusion_counts() {
    let m = ConfusionMatrix { tp: 93, tn: 312, fp: 19, fn_: 26 };
    let c1 = prf1(&m, 1);
    let c0 = prf1(&m, 0);
    for (got, want) in [
        (c1.accuracy, 0.9000),
        (c1.precision, 0.8304),
        (c1.recall, 0.7815),
        (c1.f1, 0.8052),
        (c0.precision, 0.9231),
        (c0.recall, 0.9426),
        (c0.f1, 0.9327),
    ] {
        assert!((got - want).abs() <= 5e-5, "{got} vs {want}");
    }
    assert_eq!(c0.accuracy, c1.accuracy);
}

#[test]
fn zero_division_is_flagged() {
    let m = ConfusionMatrix { tp: 0, tn: 5, fp: 0, fn_: 3 };
    let c = prf1(&m, 1);
    assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
    assert!(c.zero_division);
    assert!(!prf1(&ConfusionMatrix { tp: 1, tn: 1, fp: 1, fn_: 1 }, 1).zero_division);
}

#[test]
fn confusion_counts_and_errors() {
    let m = confusion(&[1, 0, 1, 0, 1], &[1, 1, 0, 0, 1]).unwrap();
    assert_eq!(m, ConfusionMatrix { tp: 2, tn: 1, fp: 1, fn_: 1 });
    assert!(confusion(&[1, 0], &[1]).is_err());
    assert!(matches!(
        confusion(&[0, 1, 2], &[0, 1, 1]),
        Err(qfsru::Error::InvalidLabel { record: 2, .. })
    ));
}

#[test]
fn auc_edge_cases() {
    assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0, 0, 1, 1], &[0.4, 0.3, 0.2, 0.1]).unwrap(), 0.0);
    assert_eq!(roc_auc(&[0, 1, 0, 1], &[0.5; 4]).unwrap(), 0.5);
    assert!(roc_auc(&[1, 1], &[0.1, 0.2]).is_err());
    assert!(roc_auc(&[0, 1], &[0.1]).is_err());
}

#[test]
fn folds_cover_every_sample_once() {
    let labels: Vec<u8> = (0..450).map(|i| (i < 119) as u8).collect();
    let a = stratified_folds(&labels, 5, 3).unwrap();
    let mut seen = vec![0; labels.len()];
    for f in 0..5 {
        for i in a.members(f) {
            seen[i] += 1;
        }
        let test = a.members(f);
        let train = a.complement(f);
        assert_eq!(test.len() + train.len(), labels.len());
        let pos = test.iter().filter(|&&i| labels[i] == 1).count();
        assert!(pos == 23 || pos == 24, "fold {f} has {pos} positives");
    }
    assert!(seen.iter().all(|&c| c == 1));
    assert_eq!(a, stratified_folds(&labels, 5, 3).unwrap());
    assert!(stratified_folds(&[0, 0, 1], 2, 0).is_err());
    assert!(stratified_folds(&labels, 1, 0).is_err());
}

fn tiny_problem() -> (qfsru::data::SampleSet, qfsru::data::KnowledgeBase, TrainConfig) {
    let (data, kb) = synth_dataset(&SynthConfig {
        n_samples: 50,
        d_t: 16,
        d_v: 24,
        d_k: 16,
        n_knowledge: 8,
        class_separation: 8.0,
        noise_sigma: 1.0,
        seed: 11,
    })
    .unwrap();
    let cfg = TrainConfig { epochs: 4, proj_dim: 8, ..TrainConfig::default() };
    (data, kb, cfg)
}

#[test]
fn cross_validation_is_reproducible_and_job_independent() {
    let (data, kb, cfg) = tiny_problem();
    let a = cross_validate(&data, &kb, &cfg, 5, 1).unwrap();
    let b = cross_validate(&data, &kb, &cfg, 5, 3).unwrap();
    assert_eq!(report(&a, ReportFormat::Json).unwrap(), report(&b, ReportFormat::Json).unwrap());
    assert_eq!(a.folds.len(), 5);
    assert_eq!(a.folds.iter().map(|f| f.fold).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert_eq!(a.folds.iter().map(|f| f.support).sum::<usize>(), 50);
    assert_eq!(a.pooled_confusion().total(), 50);
    let mean_acc = a.folds.iter().map(|f| f.accuracy).sum::<f64>() / 5.0;
    assert!((a.average.accuracy - mean_acc).abs() < 1e-15);
}

#[test]
fn report_formats() {
    let (data, kb, cfg) = tiny_problem();
    let r = cross_validate(&data, &kb, &cfg, 2, 1).unwrap();
    let json = report(&r, ReportFormat::Json).unwrap();
    assert_eq!(CVReport::from_json(&json).unwrap(), r);
    assert!(json.contains("\"fn\""));

    let csv = report(&r, ReportFormat::Csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fold,accuracy,precision,recall,f1,roc_auc,train_accuracy");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("avg,"));

    let text = report(&r, ReportFormat::Text).unwrap();
    assert!(text.starts_with("Fold"));
    assert!(text.contains("Avg"));
    assert!(text.contains("Pooled confusion"));

    let conf = confusion_csv(&r);
    assert_eq!(conf.lines().next().unwrap(), "fold,tp,tn,fp,fn");
    assert_eq!(conf.lines().count(), 3);
    assert!("xml".parse::<ReportFormat>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_pair_counting(seed in any::<u64>(), n in 2usize..200, levels in 1usize..20) {
        let mut rng = SplitMix64::new(seed);
        let mut labels = random_labels(&mut rng, n, 0.5);
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64).collect();
        prop_assert_eq!(roc_auc(&labels, &scores).unwrap(), pair_count_auc(&labels, &scores));
    }

    #[test]
    fn folds_are_balanced(seed in any::<u64>(), n in 20usize..300, k in 2usize..10) {
        let mut rng = SplitMix64::new(seed);
        let labels = random_labels(&mut rng, n, 0.4);
        let ones = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(ones >= k && n - ones >= k);
        let a = stratified_folds(&labels, k, seed).unwrap();
        let counts = fold_class_counts(&labels, &a.fold_of, k);
        for class in 0..2 {
            let max = counts.iter().map(|c| c[class]).max().unwrap();
            let min = counts.iter().map(|c| c[class]).min().unwrap();
            prop_assert!(max - min <= 1);
        }
        let sizes: Vec<usize> = counts.iter().map(|c| c[0] + c[1]).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
