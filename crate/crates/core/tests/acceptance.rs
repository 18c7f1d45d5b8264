//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use image::DynamicImage;
use microcount::adapters::{compute_dataset_stats, count_from_mask, count_from_points, rasterize_points};
use microcount::evaluator::{mae, predict, rmse};
use microcount::manifest::Manifest;
use microcount::models::attention::{attention_maps, re_attention, xca_maps};
use microcount::models::layers::Fwd;
use microcount::models::{
    build_backbone, count_parameters, estimate_flops, BackboneConfig, CountingModel, Family, HeadType, PerBranch,
};
use microcount::seed::rng;
use microcount::synthgen::{generate_dataset, owning_pixel, CountDistribution, DatasetSpec, SceneConfig};
use microcount::trainer::{
    train, warmup_lr, EarlyStopper, PlateauScheduler, StopReason, TensorDataset, TrainConfig, TrainReport,
};
use microcount_tensor::{
    grad_check, Conv2dSpec, FlopConvention, GradCheckConfig, GradCheckReport, Graph, ParamStore, Tensor, TensorError,
    Var,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parameter_counts() -> Outcome {
    let reference = [
        ("cnn-base", 0.59e6),
        ("cnn-medium", 0.61e6),
        ("cnn-deep", 0.96e6),
        ("resnet50", 23.53e6),
        ("resnet101", 42.54e6),
        ("vit-vanilla", 87.50e6),
        ("xcit-s24", 49.82e6),
        ("crossvit-ti", 3.07e6),
        ("parallelvit-ti", 5.50e6),
        ("deepvit-s", 34.91e6),
        ("transcrowd-g", 90.39e6),
        ("transcrowd-t", 86.86e6),
    ];
    let mut worst = (0.0, "");
    for (name, expected) in reference {
        let model = build_backbone(&BackboneConfig::preset(name).map_err(err)?, 0).map_err(err)?;
        let got = count_parameters(&model) as f64;
        let rel = (got - expected).abs() / expected;
        ensure(rel <= 0.05, format!("{name}: {got} vs {expected:.3e} ({:.2}%)", rel * 100.0))?;
        if rel > worst.0 {
            worst = (rel, name);
        }
    }
    Ok(format!("{} presets, worst {} at {:.2}%", reference.len(), worst.1, worst.0 * 100.0))
}

fn flops_ordering() -> Outcome {
    let ascending = [
        "cnn-base",
        "cnn-medium",
        "crossvit-ti",
        "cnn-deep",
        "parallelvit-ti",
        "resnet50",
        "vit-vanilla",
        "resnet101",
        "xcit-s24",
        "deepvit-s",
        "transcrowd-t",
        "transcrowd-g",
    ];
    let mut costs = Vec::new();
    for name in ascending {
        let cfg = BackboneConfig::preset(name).map_err(err)?;
        ensure(cfg.input_size == 384, format!("{name} input is {}", cfg.input_size))?;
        costs.push(estimate_flops(&cfg).map_err(err)?.total(FlopConvention::MultiplyAccumulate) as f64);
    }
    for (w, names) in costs.windows(2).zip(ascending.windows(2)) {
        ensure(w[0] < w[1], format!("{} ({:.2e}) is not below {} ({:.2e})", names[0], w[0], names[1], w[1]))?;
    }
    let vit = costs[6] / 1e8;
    ensure((128.39 / 2.0..=128.39 * 2.0).contains(&vit), format!("vit-vanilla {vit:.2}e8"))?;
    Ok(format!("strict order over {} presets, vit-vanilla {vit:.2}e8 MACs", ascending.len()))
}

fn generator_exactness(dir: &Path) -> Outcome {
    let spec = DatasetSpec {
        n_images: 200,
        scene: SceneConfig::new(512, 512, 0, 0),
        counts: CountDistribution::Uniform { min: 0, max: 300 },
    };
    let a = generate_dataset(&spec, &dir.join("a")).map_err(err)?;
    let b = generate_dataset(&spec, &dir.join("b")).map_err(err)?;
    let mut mismatches = 0;
    for (i, r) in a.records.iter().enumerate() {
        let centroids = r.centroids.as_deref().unwrap_or_default();
        let owners: HashSet<[usize; 2]> = centroids.iter().map(|c| owning_pixel(*c)).collect();
        let target = spec.scene_for(i).target_count as u64;
        if r.count != target || centroids.len() as u64 != target || owners.len() as u64 != target {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} count mismatches"))?;
    ensure(a.records == b.records, "manifests differ between runs")?;
    for r in &a.records {
        let same = std::fs::read(a.image_path(r)).map_err(err)? == std::fs::read(b.image_path(r)).map_err(err)?;
        ensure(same, format!("{} differs between runs", r.image))?;
    }
    Ok("200 images, 0 mismatches, byte-identical rerun".into())
}

fn generator_statistics(dir: &Path) -> Outcome {
    let spec =
        DatasetSpec { n_images: 2000, scene: SceneConfig::new(64, 64, 0, 0), counts: CountDistribution::default() };
    let m = generate_dataset(&spec, dir).map_err(err)?;
    let stats = m.count_stats().ok_or("empty manifest")?;
    ensure(m.len() == 2000, format!("{} images", m.len()))?;
    ensure(stats.max <= 1855, format!("max {}", stats.max))?;
    let rel = (stats.mean - 927.5).abs() / 927.5;
    ensure(rel <= 0.05, format!("mean {:.1}", stats.mean))?;
    Ok(format!("min {} max {} mean {:.1} ({:.2}% from 927.5)", stats.min, stats.max, stats.mean, rel * 100.0))
}

fn adapter_correctness(dir: &Path) -> Outcome {
    let mut r = rng(101);
    for i in 0..60 {
        let (mask, placed) = common::disjoint_blob_mask(&mut r, 96);
        let oracle = common::flood_fill_count(&mask);
        ensure(oracle == placed, format!("fixture {i}: flood fill {oracle} vs {placed} placed"))?;
        let got = count_from_mask(&mask);
        ensure(got == oracle, format!("blob mask {i}: {got} vs {oracle}"))?;
    }
    for i in 0..25 {
        let mask = common::overlapping_discs(&mut r);
        let got = count_from_mask(&mask);
        ensure(got == 2, format!("disc pair {i}: {got}"))?;
    }
    let mut scene = SceneConfig::new(96, 80, 0, 3);
    scene.ranges.sigma_a = microcount::synthgen::Range::new(0.8, 2.0);
    scene.ranges.sigma_b = microcount::synthgen::Range::new(0.8, 2.0);
    let spec = DatasetSpec { n_images: 20, scene, counts: CountDistribution::Uniform { min: 0, max: 120 } };
    let m = generate_dataset(&spec, dir).map_err(err)?;
    for rec in &m.records {
        let points = rasterize_points(96, 80, rec.centroids.as_deref().unwrap_or_default()).map_err(err)?;
        let got = count_from_points(&DynamicImage::ImageLuma8(points)).count as u64;
        ensure(got == rec.count, format!("{}: {got} points vs label {}", rec.image, rec.count))?;
    }
    Ok("60 blob masks, 25 disc pairs, 20 point maps exact".into())
}

fn check_inputs(
    inputs: Vec<Tensor>,
    f: impl Fn(&mut Graph, &[Var]) -> microcount_tensor::Result<Var>,
) -> microcount_tensor::Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .into_iter()
        .enumerate()
        .map(|(i, t)| store.trainable(format!("in{i}"), t))
        .collect::<microcount_tensor::Result<_>>()?;
    let cfg = GradCheckConfig { max_coords_per_param: 24, ..Default::default() };
    grad_check(
        &mut store,
        |g, s| {
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
            f(g, &vars)
        },
        &cfg,
    )
}

fn uniform(shape: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// Uniform on `±[0.1, 1.1]`, away from the kinks of relu and abs.
fn off_zero(shape: &[usize], seed: u64) -> Tensor {
    uniform(shape, seed, -1.0, 1.0).map(|v| if v >= 0.0 { v + 0.1 } else { v - 0.1 })
}

fn gradient_correctness() -> Outcome {
    type Prim = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Graph, &[Var]) -> microcount_tensor::Result<Var>>);
    let x = || uniform(&[2, 3, 4], 1, -1.0, 1.0);
    let mut pool: Vec<f32> = (0..2 * 2 * 6 * 6).map(|i| i as f32 * 0.05).collect();
    let mut r = rng(2);
    for i in (1..pool.len()).rev() {
        pool.swap(i, r.random_range(0..=i));
    }
    let pool = Tensor::from_vec([2, 2, 6, 6], pool).map_err(err)?;
    let conv = Conv2dSpec { stride: 2, padding: 1, groups: 1 };
    let prims: Vec<Prim> = vec![
        ("add", vec![x(), uniform(&[2, 3, 4], 3, -1.0, 1.0)], Box::new(|g, v| g.add(&v[0], &v[1]))),
        ("sub", vec![x(), uniform(&[2, 3, 4], 3, -1.0, 1.0)], Box::new(|g, v| g.sub(&v[0], &v[1]))),
        ("mul", vec![x(), uniform(&[2, 3, 4], 3, -1.0, 1.0)], Box::new(|g, v| g.mul(&v[0], &v[1]))),
        ("add_trailing", vec![x(), uniform(&[3, 4], 4, -1.0, 1.0)], Box::new(|g, v| g.add_trailing(&v[0], &v[1]))),
        ("mul_trailing", vec![x(), uniform(&[3, 4], 4, -1.0, 1.0)], Box::new(|g, v| g.mul_trailing(&v[0], &v[1]))),
        ("scale", vec![x()], Box::new(|g, v| g.scale(&v[0], 1.7))),
        ("relu", vec![off_zero(&[3, 5], 5)], Box::new(|g, v| g.relu(&v[0]))),
        ("gelu", vec![uniform(&[3, 5], 6, -3.0, 3.0)], Box::new(|g, v| g.gelu(&v[0]))),
        ("abs", vec![off_zero(&[3, 5], 7)], Box::new(|g, v| g.abs(&v[0]))),
        ("recip", vec![uniform(&[3, 5], 8, 0.5, 2.0)], Box::new(|g, v| g.recip(&v[0]))),
        ("square", vec![x()], Box::new(|g, v| g.square(&v[0]))),
        ("sum_all", vec![x()], Box::new(|g, v| g.sum_all(&v[0]))),
        ("mean_all", vec![x()], Box::new(|g, v| g.mean_all(&v[0]))),
        ("mean_axis", vec![x()], Box::new(|g, v| g.mean_axis(&v[0], 1))),
        (
            "matmul_t",
            vec![uniform(&[2, 3, 5], 9, -1.0, 1.0), uniform(&[2, 4, 5], 10, -1.0, 1.0)],
            Box::new(|g, v| g.matmul_t(&v[0], &v[1], false, true)),
        ),
        (
            "linear",
            vec![uniform(&[2, 3, 6], 11, -1.0, 1.0), uniform(&[6, 4], 12, -1.0, 1.0), uniform(&[4], 13, -1.0, 1.0)],
            Box::new(|g, v| g.linear(&v[0], &v[1], Some(&v[2]))),
        ),
        (
            "conv2d",
            vec![
                uniform(&[2, 3, 7, 7], 14, -1.0, 1.0),
                uniform(&[4, 3, 3, 3], 15, -0.2, 0.2),
                uniform(&[4], 16, -1.0, 1.0),
            ],
            Box::new(move |g, v| g.conv2d(&v[0], &v[1], Some(&v[2]), conv)),
        ),
        ("max_pool2d", vec![pool], Box::new(|g, v| g.max_pool2d(&v[0], 2, 2, 0))),
        ("softmax", vec![uniform(&[3, 6], 17, -3.0, 3.0)], Box::new(|g, v| g.softmax(&v[0]))),
        (
            "layer_norm",
            vec![uniform(&[3, 8], 18, -2.0, 2.0), uniform(&[8], 19, 0.5, 1.5), uniform(&[8], 20, -1.0, 1.0)],
            Box::new(|g, v| g.layer_norm(&v[0], &v[1], &v[2])),
        ),
        ("l2_normalize", vec![uniform(&[3, 6], 21, -1.0, 1.0)], Box::new(|g, v| g.l2_normalize(&v[0], 1e-6))),
        ("reshape", vec![x()], Box::new(|g, v| g.reshape(&v[0], &[6, 4]))),
        ("permute", vec![x()], Box::new(|g, v| g.permute(&v[0], &[2, 0, 1]))),
        ("transpose", vec![x()], Box::new(|g, v| g.transpose(&v[0], 0, 2))),
        ("narrow", vec![x()], Box::new(|g, v| g.narrow(&v[0], 2, 1, 2))),
        ("concat", vec![x(), uniform(&[2, 2, 4], 22, -1.0, 1.0)], Box::new(|g, v| g.concat(&[&v[0], &v[1]], 1))),
        ("broadcast_batch", vec![uniform(&[1, 3, 2], 23, -1.0, 1.0)], Box::new(|g, v| g.broadcast_batch(&v[0], 3))),
    ];
    let mut worst: f64 = 0.0;
    let n_prims = prims.len();
    for (name, inputs, f) in prims {
        let report = check_inputs(inputs, f).map_err(err)?;
        ensure(report.passed(), format!("{name}: relative error {:.2e}", report.max_rel_error))?;
        worst = worst.max(report.max_rel_error);
    }
    let families = [
        Family::Cnn,
        Family::Resnet,
        Family::Vit,
        Family::Deepvit,
        Family::Xcit,
        Family::Crossvit,
        Family::Parallelvit,
        Family::TranscrowdT,
        Family::TranscrowdG,
    ];
    for family in families {
        let mut bc = BackboneConfig::toy(family);
        // The plain CNN is piecewise linear everywhere; see the models tests.
        if family == Family::Cnn {
            bc.input_size = 16;
        }
        let cfg = GradCheckConfig {
            max_coords_per_param: 4,
            one_sided_at_kinks: family == Family::Cnn,
            ..Default::default()
        };
        let mut model = build_backbone(&bc, 7).map_err(err)?;
        let x = uniform(&[2, 3, bc.input_size, bc.input_size], 8, -1.0, 1.0);
        let net = model.clone();
        let report = grad_check(
            &mut model.store,
            |g, store| {
                let m = CountingModel { store: store.clone(), ..net.clone() };
                let xv = g.constant(x.clone());
                m.forward(g, &xv).map_err(|e| TensorError::Invalid(e.to_string()))
            },
            &cfg,
        )
        .map_err(err)?;
        ensure(report.passed(), format!("toy {family}: relative error {:.2e}", report.max_rel_error))?;
        worst = worst.max(report.max_rel_error);
    }
    Ok(format!("{n_prims} primitives and {} toy models, worst relative error {worst:.2e}", families.len()))
}

fn rows_stochastic(t: &Tensor, row: usize) -> Result<(), String> {
    for (i, r) in t.data().chunks(row).enumerate() {
        let s: f64 = r.iter().map(|v| *v as f64).sum();
        ensure((s - 1.0).abs() <= 1e-6, format!("row {i} sums to {s}"))?;
    }
    Ok(())
}

fn attention_invariants() -> Outcome {
    let mut r: ChaCha8Rng = rng(7);
    let store = ParamStore::new();
    let mut max_identity_gap: f64 = 0.0;
    for trial in 0..1000 {
        let (b, h, n, d) = (r.random_range(1..3), r.random_range(1..5), r.random_range(1..12), r.random_range(1..9));
        let spread = r.random_range(0.1f32..4.0);
        let mut g = Graph::inference();
        let q = g.constant(Tensor::from_fn([b, h, n, d], |_| r.random_range(-spread..spread)));
        let k = g.constant(Tensor::from_fn([b, h, n, d], |_| r.random_range(-spread..spread)));
        let mut f = Fwd::new(&mut g, &store);
        let maps = attention_maps(&mut f, &q, &k, 1.0 / (d as f32).sqrt()).map_err(err)?;
        rows_stochastic(maps.value(), n).map_err(|e| format!("mhsa trial {trial}: {e}"))?;

        let theta = f.g.constant(Tensor::from_fn([h, h], |_| r.random_range(-1.0f32..1.0) + 1e-3));
        let mixed = re_attention(&mut f, &maps, &theta).map_err(err)?;
        rows_stochastic(mixed.value(), n).map_err(|e| format!("re-attention trial {trial}: {e}"))?;

        let eye = f.g.constant(Tensor::from_fn([h, h], |i| if i / h == i % h { 1.0 } else { 0.0 }));
        let same = re_attention(&mut f, &maps, &eye).map_err(err)?;
        for (a, c) in same.value().data().iter().zip(maps.value().data()) {
            max_identity_gap = max_identity_gap.max((a - c).abs() as f64);
        }
        ensure(max_identity_gap <= 1e-6, format!("identity mixing trial {trial}: gap {max_identity_gap:.2e}"))?;

        // Channels attend to channels: maps are dh x dh at any token count.
        let temp = f.g.constant(Tensor::from_fn([h], |_| r.random_range(0.2f32..3.0)));
        let qt = f.g.constant(Tensor::from_fn([b, h, d, n], |_| r.random_range(-spread..spread)));
        let kt = f.g.constant(Tensor::from_fn([b, h, d, n], |_| r.random_range(-spread..spread)));
        let xca = xca_maps(&mut f, &qt, &kt, &temp).map_err(err)?;
        ensure(xca.shape() == [b, h, d, d], format!("xca trial {trial}: shape {:?} at n = {n}", xca.shape()))?;
        rows_stochastic(xca.value(), d).map_err(|e| format!("xca trial {trial}: {e}"))?;
    }
    Ok(format!("1000 trials each, identity re-attention gap {max_identity_gap:.1e}"))
}

fn protocol_conformance() -> Outcome {
    let cfg = TrainConfig::default();
    let at = |step| warmup_lr(step, cfg.base_lr, cfg.min_lr(), cfg.warmup_steps);
    ensure(at(5000) == 1e-4, format!("warm-up reaches {:e} at step 5000", at(5000)))?;
    ensure(at(4999) < 1e-4 && at(0) == 1e-6 && at(9000) == 1e-4, "warm-up ramp shape")?;
    ensure((1..=5000).all(|s| at(s) >= at(s - 1)), "warm-up is not monotone")?;

    let mut plateau = PlateauScheduler::new(1e-4, cfg.plateau_factor, cfg.plateau_patience, cfg.improvement_threshold);
    plateau.observe(1.0);
    let lrs: Vec<f64> = (0..5).map(|_| plateau.observe(1.0)).collect();
    ensure(lrs[..4].iter().all(|&l| l == 1e-4), format!("decayed early: {lrs:?}"))?;
    ensure(lrs[4] == 1e-4 * cfg.plateau_factor && plateau.reductions == 1, format!("after 5 flat epochs: {lrs:?}"))?;

    let mut stopper = EarlyStopper::new(cfg.early_stop_patience, cfg.max_epochs, cfg.improvement_threshold);
    ensure(stopper.observe(1.0).is_none(), "stopped on first epoch")?;
    for flat in 1..20 {
        ensure(stopper.observe(1.0).is_none(), format!("stopped after {flat} flat epochs"))?;
    }
    ensure(stopper.observe(1.0) == Some(StopReason::Plateau), "20 flat epochs did not stop")?;

    let mut stopper = EarlyStopper::new(cfg.early_stop_patience, cfg.max_epochs, cfg.improvement_threshold);
    let mut loss = 1.0;
    let mut epochs = 0;
    let reason = loop {
        epochs += 1;
        loss *= 0.99;
        if let Some(reason) = stopper.observe(loss) {
            break reason;
        }
        ensure(epochs < 10_000, "never stopped")?;
    };
    ensure(reason == StopReason::MaxEpochs && epochs == 400, format!("{reason:?} after {epochs} epochs"))?;
    Ok("warm-up 1e-4 at 5000, 1 decay after 5 flat, stop after 20 flat, cap at 400".into())
}

struct ToyRun {
    report: TrainReport,
    val_mae: f64,
    baseline: f64,
}

fn toy_training_run(dir: &Path) -> Result<ToyRun, String> {
    let spec = DatasetSpec {
        n_images: 1000,
        scene: SceneConfig::new(64, 64, 0, 0),
        counts: CountDistribution::Uniform { min: 0, max: 10 },
    };
    let manifest = if dir.join("manifest.jsonl").exists() {
        Manifest::load(dir).map_err(err)?
    } else {
        generate_dataset(&spec, dir).map_err(err)?
    };
    let (train_m, val_m) = manifest.split(0.8, 0).map_err(err)?;
    let stats = compute_dataset_stats(&train_m).map_err(err)?;
    let train_set = TensorDataset::load(&train_m, &stats, 64).map_err(err)?;
    let val_set = TensorDataset::load(&val_m, &stats, 64).map_err(err)?;

    let model_cfg = BackboneConfig::toy(Family::Vit);
    ensure(
        model_cfg.depth == 2 && model_cfg.dim == PerBranch::One(32) && model_cfg.head_type == HeadType::Token,
        "toy ViT is not a depth-2, dim-32 token-head model",
    )?;
    let mut model = build_backbone(&model_cfg, 0).map_err(err)?;
    let cfg = TrainConfig {
        base_lr: 1e-3,
        warmup_steps: 100,
        batch_size: Some(32),
        max_epochs: 40,
        seed: 0,
        ..Default::default()
    };
    let report = train(&mut model, &train_set, &val_set, &cfg).map_err(err)?;
    let pred = predict(&model, &val_set, 64).map_err(err)?;
    let val_mae = mae(&pred, &val_set.counts).map_err(err)?;
    let mean = train_set.mean_count();
    let baseline = mae(&vec![mean; val_set.len()], &val_set.counts).map_err(err)?;
    Ok(ToyRun { report, val_mae, baseline })
}

fn toy_training(dir: &Path) -> Outcome {
    let first = toy_training_run(dir)?;
    ensure(first.val_mae < 1.5, format!("held-out MAE {:.3}", first.val_mae))?;
    ensure(
        first.val_mae < first.baseline,
        format!("MAE {:.3} does not beat the mean predictor {:.3}", first.val_mae, first.baseline),
    )?;
    let second = toy_training_run(dir)?;
    let bits = |r: &TrainReport| r.loss_trace.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&first.report) == bits(&second.report), "loss traces differ between identical runs")?;
    ensure(first.val_mae.to_bits() == second.val_mae.to_bits(), "held-out MAE differs between runs")?;
    Ok(format!(
        "held-out MAE {:.3} vs mean baseline {:.3} after {} epochs, {} identical updates",
        first.val_mae,
        first.baseline,
        first.report.epochs.len(),
        first.report.loss_trace.len()
    ))
}

fn metric_oracle() -> Outcome {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for trial in 0..10_000 {
        let n = r.random_range(1..200);
        let scale = 10f64.powi(r.random_range(-3..4));
        let pred: Vec<f64> = (0..n).map(|_| r.random_range(-scale..scale)).collect();
        let truth: Vec<f64> = (0..n).map(|_| r.random_range(0.0..scale)).collect();
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        for i in 0..n {
            let e = pred[i] - truth[i];
            abs_sum += e.abs();
            sq_sum += e * e;
        }
        let (want_mae, want_rmse) = (abs_sum / n as f64, (sq_sum / n as f64).sqrt());
        let (got_mae, got_rmse) = (mae(&pred, &truth).map_err(err)?, rmse(&pred, &truth).map_err(err)?);
        let gap =
            ((got_mae - want_mae).abs() / want_mae.max(1.0)).max((got_rmse - want_rmse).abs() / want_rmse.max(1.0));
        ensure(gap <= 1e-9, format!("trial {trial}: gap {gap:.2e}"))?;
        ensure(got_rmse >= got_mae, format!("trial {trial}: rmse {got_rmse} < mae {got_mae}"))?;
        worst = worst.max(gap);
    }
    Ok(format!("10000 vectors, worst gap {worst:.1e}"))
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let root = scratch.path();
    let criteria: Vec<Criterion> = vec![
        ("parameter counts", Box::new(parameter_counts)),
        ("FLOPs ordering", Box::new(flops_ordering)),
        ("generator exactness", Box::new(|| generator_exactness(&root.join("exact")))),
        ("generator statistics", Box::new(|| generator_statistics(&root.join("stats")))),
        ("adapter correctness", Box::new(|| adapter_correctness(&root.join("points")))),
        ("gradient correctness", Box::new(gradient_correctness)),
        ("attention invariants", Box::new(attention_invariants)),
        ("protocol conformance", Box::new(protocol_conformance)),
        ("toy training", Box::new(|| toy_training(&root.join("toy")))),
        ("metric oracle", Box::new(metric_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
