//! Training loop on a tiny model: determinism, checkpoint selection and
//! divergence reporting.

use condiff_core::data::{build_dataset, DatasetParams, Split};
use condiff_core::image::normalize;
use condiff_core::trainer::{train, TrainConfig, TrainPair};
use condiff_core::{Denoiser, DenoiserConfig, Error, NoiseSchedule};

fn tiny_model() -> Denoiser {
    let cfg = DenoiserConfig {
        levels: 2,
        base_channels: 4,
        channel_mult: vec![1, 2],
        blocks_per_level: 1,
        attention_levels: vec![2],
        attention_heads: 1,
        embed_dim: 8,
        input_channels: 2,
    };
    Denoiser::new(cfg, 3).unwrap()
}

fn pairs(split: Split) -> Vec<TrainPair> {
    let params = DatasetParams {
        patch: 16,
        train_pairs: 12,
        val_pairs: 3,
        test_pairs: 1,
        ..Default::default()
    };
    build_dataset(&params, 5)
        .unwrap()
        .split(split)
        .map(|p| TrainPair {
            x: normalize(&p.low),
            y0: normalize(&p.high),
        })
        .collect()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        lr_init: 1e-2,
        ..Default::default()
    }
}

#[test]
fn training_is_deterministic() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    let a = train(tiny_model(), &tr, &va, &sched, &config(2), |_| {}).unwrap();
    let b = train(tiny_model(), &tr, &va, &sched, &config(2), |_| {}).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.0, tiny_model());
}

#[test]
fn zero_learning_rate_only_normalizes() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    let cfg = TrainConfig { lr_init: 0.0, ..config(1) };
    let (model, hist) = train(tiny_model(), &tr, &va, &sched, &cfg, |_| {}).unwrap();
    let mut normalized = tiny_model();
    normalized.normalize_weights().unwrap();
    // renormalizing a normalized row may move the last bit
    for (a, b) in model.params().iter().zip(normalized.params()) {
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() < 1e-12), "{}", a.name);
    }
    assert_eq!(hist.epochs[0].val_mae, Some(hist.initial_val_mae));
}

#[test]
fn keeps_the_first_validation_minimum() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    let mut seen = Vec::new();
    let (_, hist) = train(tiny_model(), &tr, &va, &sched, &config(4), |r| seen.push(r.clone())).unwrap();
    assert_eq!(seen, hist.epochs);
    let vals: Vec<(usize, f64)> = hist.epochs.iter().filter_map(|e| e.val_mae.map(|v| (e.epoch, v))).collect();
    assert_eq!(vals.len(), 4);
    let best = vals.iter().fold(f64::INFINITY, |m, &(_, v)| m.min(v));
    let first = vals.iter().find(|&&(_, v)| v == best).unwrap().0;
    assert_eq!(hist.best_epoch, first);
    assert_eq!(hist.best_val_mae(), Some(best));
    assert!(hist.initial_val_mae.is_finite());
}

#[test]
fn validation_cadence_always_includes_the_last_epoch() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    let cfg = TrainConfig { val_every: 2, ..config(3) };
    let (_, hist) = train(tiny_model(), &tr, &va, &sched, &cfg, |_| {}).unwrap();
    let validated: Vec<usize> = hist.epochs.iter().filter(|e| e.val_mae.is_some()).map(|e| e.epoch).collect();
    assert_eq!(validated, vec![2, 3]);
}

#[test]
fn overflowing_updates_are_reported_as_divergence() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    let cfg = TrainConfig { lr_init: f64::MAX, ..config(2) };
    let err = train(tiny_model(), &tr, &va, &sched, &cfg, |_| {}).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn invalid_settings_are_rejected() {
    let (tr, va) = (pairs(Split::Train), pairs(Split::Val));
    let sched = NoiseSchedule::cosine(8, 8e-3).unwrap();
    for cfg in [
        TrainConfig { lr_init: -1e-3, ..config(1) },
        TrainConfig { batch_size: 0, ..config(1) },
        TrainConfig { epochs: 0, ..config(1) },
    ] {
        assert!(train(tiny_model(), &tr, &va, &sched, &cfg, |_| {}).is_err());
    }
    assert!(train(tiny_model(), &tr, &[], &sched, &config(1), |_| {}).is_err());
}
