mod common;

use common::*;
use proptest::prelude::*;
use qfsru::classifier::*;
use qfsru::data::{synth_dataset, SynthConfig};
use qfsru::fusion::FusionMode;
use qfsru::rng::SplitMix64;
use qfsru::Error;

fn toy_inputs(rng: &mut SplitMix64, dims: ModelDims) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        gaussian_vec(rng, dims.d_v),
        gaussian_vec(rng, dims.d_t),
        gaussian_vec(rng, dims.d_k),
    )
}

#[test]
fn gradient_check_wider_model() {
    let dims = ModelDims {
        d_v: 18,
        d_t: 10,
        d_f: 7,
        d_k: 9,
        classes: 2,
    };
    let mut rng = SplitMix64::new(1);
    for mode in [FusionMode::Gated, FusionMode::Concat] {
        for label in 0..2 {
            let p = random_params(dims, &mut rng, 0.3);
            let (v, t, k) = toy_inputs(&mut rng, dims);
            let x = ModelInputs { v_feat: &v, t_feat: &t, k_agg: &k };
            let fp = FocalParams { gamma: 2.0, alpha: vec![0.4, 1.6], epsilon: 0.1 };
            let pred = forward(&p, mode, x).unwrap();
            let l = focal_loss(&pred.probs, label, &fp).unwrap();
            let g = backward(&p, mode, &pred, &l.dlogits, x).unwrap();
            let num = numeric_gradient(&p, mode, x, label, &fp, 1e-5);
            for (i, (a, n)) in g.tensors().iter().zip(&num).enumerate() {
                let e = relative_error(a, n);
                assert!(e <= 1e-4, "{mode:?} {} rel err {e}", TENSOR_NAMES[i]);
            }
        }
    }
}

#[test]
fn concat_mode_leaves_gate_untouched() {
    let dims = small_dims();
    let mut rng = SplitMix64::new(2);
    let p = random_params(dims, &mut rng, 0.5);
    let (v, t, k) = toy_inputs(&mut rng, dims);
    let x = ModelInputs { v_feat: &v, t_feat: &t, k_agg: &k };
    let pred = forward(&p, FusionMode::Concat, x).unwrap();
    assert!(pred.gate.iter().all(|&g| g == 1.0));
    let g = backward(&p, FusionMode::Concat, &pred, &[0.7, -0.7], x).unwrap();
    assert!(g.gate.weight.as_slice().iter().all(|&x| x == 0.0));
    assert!(g.gate.bias.iter().all(|&x| x == 0.0));
}

#[test]
fn duplicate_sample_batch_doubles_gradient() {
    let dims = small_dims();
    let mut rng = SplitMix64::new(3);
    let p = random_params(dims, &mut rng, 0.5);
    let (v, t, k) = toy_inputs(&mut rng, dims);
    let x = ModelInputs { v_feat: &v, t_feat: &t, k_agg: &k };
    let fp = FocalParams { gamma: 2.0, alpha: vec![1.0, 1.0], epsilon: 0.1 };
    let pred = forward(&p, FusionMode::Gated, x).unwrap();
    let l = focal_loss(&pred.probs, 1, &fp).unwrap();
    let single = backward(&p, FusionMode::Gated, &pred, &l.dlogits, x).unwrap();
    let mut batch = p.zeros_like();
    for _ in 0..2 {
        backward_into(&p, FusionMode::Gated, &pred, &l.dlogits, x, 1.0, &mut batch).unwrap();
    }
    for (a, b) in single.tensors().iter().zip(batch.tensors()) {
        for (s, d) in a.iter().zip(b) {
            assert!((2.0 * s - d).abs() <= 1e-14 * (1.0 + d.abs()));
        }
    }
}

#[test]
fn loss_examples() {
    let ce = FocalParams::cross_entropy(2);
    let l = focal_loss(&[0.5, 0.5], 0, &ce).unwrap();
    assert!((l.loss - std::f64::consts::LN_2).abs() < 1e-15);
    let fp = FocalParams { gamma: 2.0, alpha: vec![1.0, 1.0], epsilon: 0.0 };
    let l = focal_loss(&[0.1, 0.9], 1, &fp).unwrap();
    let want = 0.01 * -(0.9f64).ln();
    assert!((l.loss - want).abs() < 1e-15);
    assert!(focal_loss(&[0.5, 0.5], 2, &fp).is_err());
}

#[test]
fn adam_examples() {
    let dims = small_dims();
    let mut p = ModelParams::zeros(dims);
    let mut g = p.zeros_like();
    g.head.bias[0] = 3.0;
    g.head.bias[1] = -0.02;
    let mut adam = AdamState::new(&p);
    adam.step(&mut p, &g, 1e-3).unwrap();
    assert!((p.head.bias[0] + 1e-3).abs() <= 1e-3 * 1e-6);
    assert!((p.head.bias[1] - 1e-3).abs() <= 1e-3 * 1e-6);
    // untouched slots stay at zero
    assert_eq!(p.proj_v.weight.as_slice()[0], 0.0);

    // minimise w² from w = 1
    let mut p = ModelParams::zeros(dims);
    p.head.bias[0] = 1.0;
    let mut adam = AdamState::new(&p);
    for _ in 0..100 {
        let mut g = p.zeros_like();
        g.head.bias[0] = 2.0 * p.head.bias[0];
        adam.step(&mut p, &g, 0.1).unwrap();
    }
    assert!(p.head.bias[0].abs() < 0.5);

    let mut bad = p.zeros_like();
    bad.gate.bias[1] = f64::NAN;
    let before = (p.clone(), adam.t);
    assert!(matches!(adam.step(&mut p, &bad, 0.1), Err(Error::NonFiniteGradient { .. })));
    assert_eq!((p, adam.t), before);
}

#[test]
fn cosine_schedule() {
    assert_eq!(cosine_anneal(0, 30, 1e-4, 1e-6), 1e-4);
    assert!((cosine_anneal(30, 30, 1e-4, 1e-6) - 1e-6).abs() < 1e-20);
    assert!((cosine_anneal(15, 30, 1e-4, 1e-6) - (1e-4 + 1e-6) / 2.0).abs() < 1e-18);
}

fn small_problem() -> (qfsru::data::SampleSet, qfsru::data::KnowledgeBase) {
    synth_dataset(&SynthConfig {
        n_samples: 80,
        d_t: 24,
        d_v: 40,
        d_k: 24,
        n_knowledge: 8,
        class_separation: 8.0,
        noise_sigma: 1.0,
        seed: 5,
    })
    .unwrap()
}

#[test]
fn training_loss_trends_down_on_separable_data() {
    let (data, kb) = small_problem();
    for fusion_mode in [FusionMode::Gated, FusionMode::Concat] {
        let cfg = TrainConfig {
            epochs: 20,
            proj_dim: 16,
            fusion_mode,
            ..TrainConfig::default()
        };
        let (_, history) = train(&data, &kb, &cfg).unwrap();
        let losses: Vec<f64> = history.epochs.iter().map(|e| e.mean_loss).collect();
        let first: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let last: f64 = losses[losses.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(last < first, "{fusion_mode:?}: {losses:?}");
        assert!(history.final_accuracy() >= 0.9);
        assert_eq!(history.epochs[0].lr, cfg.lr0);
    }
}

#[test]
fn epochs_zero_and_single_class_rejected() {
    let (data, kb) = small_problem();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(matches!(train(&data, &kb, &cfg), Err(Error::InvalidConfig(_))));
    let ones: Vec<usize> = (0..data.len()).filter(|&i| data.samples[i].label == 1).collect();
    let cfg = TrainConfig { epochs: 1, proj_dim: 4, ..TrainConfig::default() };
    assert!(train(&data.subset(&ones), &kb, &cfg).is_err());
}

#[test]
fn divergence_is_reported() {
    let (data, kb) = small_problem();
    let cfg = TrainConfig {
        epochs: 3,
        proj_dim: 8,
        lr0: 1e300,
        ..TrainConfig::default()
    };
    match train(&data, &kb, &cfg) {
        Err(e @ (Error::Divergence { .. } | Error::NonFiniteGradient { .. })) => {
            assert_eq!(e.kind(), qfsru::ErrorKind::Numeric)
        }
        other => panic!("expected a numeric failure, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip() {
    let (data, kb) = small_problem();
    let cfg = TrainConfig { epochs: 2, proj_dim: 6, ..TrainConfig::default() };
    let (params, _) = train(&data, &kb, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.qfmp");
    save_model(&path, &params, &cfg).unwrap();
    assert!(sidecar_path(&path).exists());
    let (back, back_cfg) = load_model(&path).unwrap();
    assert_eq!(back, params);
    assert_eq!(back_cfg, cfg);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"QFMP");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    let header = 6 + 5 * 4;
    let payload: usize = params.tensors().iter().map(|t| 8 + 8 * t.len()).sum();
    assert_eq!(bytes.len(), header + payload);
    assert!(decode_params(&mut &bytes[..bytes.len() - 1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn focal_reduces_to_cross_entropy(seed in any::<u64>(), c in 2usize..6) {
        let mut rng = SplitMix64::new(seed);
        let probs = random_probs(&mut rng, c);
        let label = rng.below(c);
        let l = focal_loss(&probs, label, &FocalParams::cross_entropy(c)).unwrap();
        prop_assert!((l.loss - reference_cross_entropy(&probs, label)).abs() <= 1e-12);
    }

    #[test]
    fn focal_is_nonnegative_and_dlogits_sum_to_zero(
        seed in any::<u64>(),
        gamma in 0.0f64..4.0,
        eps in 0.0f64..0.9,
    ) {
        let mut rng = SplitMix64::new(seed);
        let probs = random_probs(&mut rng, 2);
        let fp = FocalParams { gamma, alpha: vec![rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)], epsilon: eps };
        let l = focal_loss(&probs, rng.below(2), &fp).unwrap();
        prop_assert!(l.loss >= 0.0);
        prop_assert!(l.dlogits.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-700.0f64..700.0, 1..6)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
