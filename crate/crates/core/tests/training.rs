use microcount::models::{build_backbone, BackboneConfig, CountingModel, Family};
use microcount::trainer::{train, Loss, StopReason, TensorDataset, TrainConfig};
use microcount::Error;
use microcount_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(n: usize, size: usize, seed: u64) -> TensorDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|_| {
            let count = rng.random_range(0..6) as f64;
            let t = Tensor::from_fn([3, size, size], |_| rng.random_range(-1.0f32..1.0) + count as f32 * 0.2);
            (t, count)
        })
        .collect();
    TensorDataset::from_tensors(size, items).unwrap()
}

fn toy(family: Family) -> CountingModel {
    let mut cfg = BackboneConfig::toy(family);
    cfg.input_size = 32;
    build_backbone(&cfg, 0).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig { base_lr: 1e-3, warmup_steps: 6, batch_size: Some(4), max_epochs: epochs, ..Default::default() }
}

#[test]
fn defaults_follow_the_protocol() {
    let c = TrainConfig::default();
    assert_eq!(c.base_lr, 1e-4);
    assert_eq!(c.warmup_steps, 5000);
    assert_eq!(c.plateau_patience, 5);
    assert_eq!(c.early_stop_patience, 20);
    assert_eq!(c.max_epochs, 400);
    assert_eq!(c.loss, Loss::L1);
    assert_eq!(c.batch_size_for(Family::Cnn), 128);
    assert_eq!(c.batch_size_for(Family::Resnet), 64);
    assert_eq!(c.batch_size_for(Family::Xcit), 32);
}

#[test]
fn config_rejects_unknown_keys_and_bad_factors() {
    assert!(serde_json::from_str::<TrainConfig>(r#"{"learning_rate": 0.1}"#).is_err());
    let c: TrainConfig = serde_json::from_str(r#"{"plateau_factor": 1.0}"#).unwrap();
    assert!(c.validate().is_err());
    let c: TrainConfig = serde_json::from_str(r#"{"early_stop_patience": 0}"#).unwrap();
    assert!(c.validate().is_err());
}

#[test]
fn one_repeated_sample_is_fitted() {
    let data = random_set(1, 32, 1);
    let mut model = toy(Family::Vit);
    let cfg = TrainConfig {
        base_lr: 1e-3,
        warmup_steps: 0,
        batch_size: Some(1),
        max_epochs: 200,
        early_stop_patience: 200,
        ..Default::default()
    };
    let r = train(&mut model, &data, &data, &cfg).unwrap();
    assert!(r.loss_trace.len() <= 200);
    let best = r.loss_trace.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "best L1 {best}");
}

#[test]
fn rate_ramps_then_never_rises() {
    let (tr, va) = (random_set(12, 32, 2), random_set(4, 32, 3));
    let mut model = toy(Family::Deepvit);
    let cfg = quick(8);
    let r = train(&mut model, &tr, &va, &cfg).unwrap();
    let min = cfg.min_lr();
    assert!((r.lr_trace[0] - min).abs() < 1e-15);
    assert!((r.lr_trace[6] - 1e-3).abs() < 1e-15);
    for w in r.lr_trace[..7].windows(2) {
        assert!(w[1] > w[0]);
    }
    for w in r.lr_trace[6..].windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn convolutional_families_skip_warmup() {
    let (tr, va) = (random_set(8, 32, 4), random_set(4, 32, 5));
    let mut model = toy(Family::Cnn);
    let r = train(&mut model, &tr, &va, &quick(2)).unwrap();
    assert!(r.lr_trace.iter().all(|lr| *lr == 1e-3));
}

#[test]
fn same_seed_same_trace() {
    let (tr, va) = (random_set(10, 32, 6), random_set(4, 32, 7));
    let run = |seed| {
        let mut model = toy(Family::Vit);
        train(&mut model, &tr, &va, &TrainConfig { seed, ..quick(3) }).unwrap()
    };
    let (a, b, c) = (run(0), run(0), run(1));
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.epochs, b.epochs);
    assert_ne!(a.loss_trace, c.loss_trace);
}

#[test]
fn best_epoch_weights_are_kept() {
    let (tr, va) = (random_set(12, 32, 8), random_set(6, 32, 9));
    let mut model = toy(Family::Parallelvit);
    let r = train(&mut model, &tr, &va, &quick(6)).unwrap();
    let min = r.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_val_loss, min);
    let best = r.best_epoch.unwrap();
    assert_eq!(r.epochs[best - 1].val_loss, min);
    let preds = microcount::evaluator::predict(&model, &va, 4).unwrap();
    assert_eq!(Loss::L1.value(&preds, &va.counts).unwrap(), min);
}

#[test]
fn flat_validation_stops_early() {
    let (tr, va) = (random_set(4, 32, 10), random_set(2, 32, 11));
    let mut model = toy(Family::Cnn);
    // A zero rate leaves the validation loss flat after the first epoch.
    let cfg = TrainConfig { base_lr: 1e-30, min_lr: Some(0.0), early_stop_patience: 3, max_epochs: 50, ..quick(50) };
    let r = train(&mut model, &tr, &va, &cfg).unwrap();
    assert_eq!(r.stop_reason, StopReason::Plateau);
    assert_eq!(r.epochs.len(), 4);
}

#[test]
fn non_finite_labels_abort_with_report() {
    let mut tr = random_set(4, 32, 12);
    tr.counts[2] = f64::NAN;
    let va = random_set(2, 32, 13);
    let mut model = toy(Family::Vit);
    match train(&mut model, &tr, &va, &quick(3)) {
        Err(Error::Diverged { report, .. }) => {
            assert_eq!(report.stop_reason, StopReason::Diverged);
            assert!(!report.loss_trace.is_empty());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn empty_or_mismatched_splits_are_rejected() {
    let va = random_set(2, 32, 14);
    let empty = TensorDataset::from_tensors(32, vec![]).unwrap();
    let mut model = toy(Family::Vit);
    assert!(train(&mut model, &empty, &va, &quick(1)).is_err());
    let big = random_set(2, 64, 15);
    assert!(train(&mut model, &big, &va, &quick(1)).is_err());
}

#[test]
fn report_files_are_written() {
    let (tr, va) = (random_set(6, 32, 16), random_set(3, 32, 17));
    let mut model = toy(Family::Vit);
    let r = train(&mut model, &tr, &va, &quick(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.save(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("loss_curve.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,train_loss,val_loss,val_mae,lr");
    assert_eq!(csv.lines().count(), 3);
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: microcount::trainer::TrainReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}
