//! End-to-end training loop behaviour on small synthetic data.

mod common;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use vitforge::preprocess::{make_batches, PackedDataset};
use vitforge::train::{adam_step_params, cross_entropy, evaluate, fit, AdamState, TrainConfig};
use vitforge::{Tensor, ViTConfig, ViTParams, VisionTransformer};

/// `n` images whose class sets the mean of a fixed spatial pattern, plus noise.
fn synthetic(n: usize, classes: usize, noise: f64, seed: u64) -> PackedDataset {
    let mut r = common::rng(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let side = 8;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let per = 3 * side * side;
    let mut data = Vec::with_capacity(n * per);
    for &label in &labels {
        for i in 0..per {
            let (c, y, x) = (i / (side * side), (i / side) % side, i % side);
            let pattern = ((x + y + c + label * 3) % (classes + 1)) as f64 / classes as f64;
            let v: f64 = 0.2 + 0.6 * pattern + normal.sample(&mut r);
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    let images = Tensor::new([n, 3, side, side], data).unwrap();
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    PackedDataset::new(images, labels, names).unwrap()
}

fn setup(classes: usize) -> (VisionTransformer, ViTParams<f32>) {
    let cfg = ViTConfig::tiny(classes);
    (VisionTransformer::new(cfg).unwrap(), ViTParams::init(&cfg, 42).unwrap())
}

#[test]
fn one_step_lowers_batch_loss() {
    let (model, mut params) = setup(2);
    let ds = synthetic(16, 2, 0.05, 1);
    let batch = &make_batches(&ds, 16, 8, None).unwrap()[0];
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        ..Default::default()
    };
    let step = model.loss_and_gradients(&params, &batch.images, &batch.labels).unwrap();
    let mut state = AdamState::for_params(&params);
    adam_step_params(&mut params, &step.grads, &mut state, &cfg).unwrap();
    let after = cross_entropy(&model.forward(&params, &batch.images).unwrap(), &batch.labels).unwrap();
    assert!(after < step.loss, "{after} >= {}", step.loss);
}

#[test]
fn evaluate_loss_matches_pooled_cross_entropy() {
    let (model, params) = setup(3);
    let ds = synthetic(23, 3, 0.1, 2);
    let cfg = TrainConfig {
        batch_size: 5,
        ..Default::default()
    };
    let e = evaluate(&model, &params, &ds, &cfg).unwrap();
    let pooled = cross_entropy(&model.forward(&params, &ds.images).unwrap().cast::<f64>(), &ds.labels).unwrap();
    assert!((e.loss - pooled).abs() < 1e-6, "{} vs {pooled}", e.loss);
    assert_eq!(e.report.num_samples, 23);
    for row in e.probabilities.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fit_is_deterministic() {
    let (model, params) = setup(2);
    let train = synthetic(20, 2, 0.1, 3);
    let test = synthetic(8, 2, 0.1, 4);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 6,
        learning_rate: 1e-3,
        seed: 9,
        ..Default::default()
    };
    let a = fit(&model, params.clone(), &train, &test, &cfg, |_| Ok(())).unwrap();
    let b = fit(&model, params, &train, &test, &cfg, |_| Ok(())).unwrap();
    let json = |logs: &[vitforge::EpochLog]| serde_json::to_string(logs).unwrap();
    assert_eq!(json(&a.logs), json(&b.logs));
    assert_eq!(a.best_params, b.best_params);
}

#[test]
fn plateau_stops_at_best_plus_patience() {
    let (model, params) = setup(2);
    let train = synthetic(12, 2, 0.1, 5);
    let test = synthetic(6, 2, 0.1, 6);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 4,
        learning_rate: 1e-12,
        patience: 3,
        ..Default::default()
    };
    let mut seen = Vec::new();
    let out = fit(&model, params, &train, &test, &cfg, |ev| {
        seen.push((ev.log.epoch, ev.improved));
        Ok(())
    })
    .unwrap();
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.logs.len(), 1 + 3);
    assert!(out.stopped_early);
    assert_eq!(seen, vec![(1, true), (2, false), (3, false), (4, false)]);
}

#[test]
fn best_snapshot_has_lowest_logged_test_loss() {
    let (model, params) = setup(2);
    let train = synthetic(24, 2, 0.15, 7);
    let test = synthetic(10, 2, 0.15, 8);
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 8,
        learning_rate: 3e-3,
        patience: 2,
        seed: 1,
        ..Default::default()
    };
    let out = fit(&model, params, &train, &test, &cfg, |_| Ok(())).unwrap();
    let min = out.logs.iter().map(|l| l.test_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.logs[out.best_epoch - 1].test_loss, min);
    let again = evaluate(&model, &out.best_params, &test, &cfg).unwrap();
    assert_eq!(again.loss, min);
}

#[test]
fn fit_rejects_empty_and_mismatched_data() {
    let (model, params) = setup(2);
    let empty = PackedDataset {
        images: Tensor::zeros([1, 3, 8, 8]),
        labels: Vec::new(),
        class_names: vec!["a".into(), "b".into()],
    };
    let ok = synthetic(4, 2, 0.1, 9);
    let cfg = TrainConfig::default();
    assert!(fit(&model, params.clone(), &empty, &ok, &cfg, |_| Ok(())).is_err());
    let three = synthetic(6, 3, 0.1, 10);
    assert!(fit(&model, params, &ok, &three, &cfg, |_| Ok(())).is_err());
}

#[test]
fn random_labels_do_not_break_metrics() {
    let (model, params) = setup(2);
    let mut ds = synthetic(9, 2, 0.3, 11);
    let mut r = common::rng(12);
    ds.labels = (0..9).map(|_| r.random_range(0..2)).collect();
    ds.labels[0] = 0;
    ds.labels[1] = 1;
    let e = evaluate(&model, &params, &ds, &TrainConfig::default()).unwrap();
    assert!((0.0..=100.0).contains(&e.report.accuracy));
    assert!(e.report.auc.is_some());
}
