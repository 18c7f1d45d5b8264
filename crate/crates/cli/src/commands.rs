use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use microcount::adapters::{
    adapt_dataset, compute_dataset_stats, AdaptConfig, Layout, NormalizationStats, WatershedConfig,
};
use microcount::evaluator::{emit_report, evaluate, evaluate_dataset, EvalLabels, EvalRow};
use microcount::manifest::CountStats;
use microcount::models::{
    build_backbone, count_parameters, estimate_flops, BackboneConfig, CountingModel, Family, PRESET_NAMES,
};
use microcount::synthgen::{generate_dataset, CountDistribution, DatasetSpec, SceneConfig};
use microcount::trainer::{train, TensorDataset, TrainConfig, TrainReport};
use microcount::{Error, Manifest};
use microcount_tensor::FlopConvention;
use serde::Serialize;

use crate::run::{data_path, read_config, run_dir, write_json};
use crate::{AdaptArgs, BenchArgs, Cli, Command, EvalArgs, FlopsArgs, GenerateArgs, StatsArgs, TrainArgs};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Adapt(a) => adapt(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Flops(a) => flops(a),
    }
}

fn new_run(cli: &Cli, command: &str) -> Result<PathBuf> {
    run_dir(&cli.out, command, cli.run_name.as_deref())
}

/// A preset name or `toy-<family>`.
pub fn resolve_model(name: &str) -> Result<BackboneConfig> {
    match name.strip_prefix("toy-") {
        Some(family) => Ok(BackboneConfig::toy(family.parse::<Family>()?)),
        None => Ok(BackboneConfig::preset(name)?),
    }
}

#[derive(Serialize)]
struct DatasetSummary {
    counts: Option<CountStats>,
    normalization: Option<NormalizationStats>,
}

fn summarize(manifest: &Manifest) -> Result<DatasetSummary> {
    let normalization = if manifest.is_empty() { None } else { Some(compute_dataset_stats(manifest)?) };
    Ok(DatasetSummary { counts: manifest.count_stats(), normalization })
}

fn print_counts(manifest_path: &Path, counts: &Option<CountStats>) {
    println!("manifest: {}", manifest_path.display());
    match counts {
        Some(c) => println!("images: {}  min: {}  ave: {:.1}  max: {}", c.images, c.min, c.mean, c.max),
        None => println!("images: 0"),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let mut spec: DatasetSpec = match &a.config {
        Some(p) => read_config(Some(p), "")?,
        None => DatasetSpec {
            n_images: 10,
            scene: SceneConfig::new(SceneConfig::NATIVE_WIDTH, SceneConfig::NATIVE_HEIGHT, 0, 0),
            counts: CountDistribution::default(),
        },
    };
    if let Some(n) = a.n_images {
        spec.n_images = n;
    }
    if let Some(w) = a.width {
        spec.scene.width = w;
    }
    if let Some(h) = a.height {
        spec.scene.height = h;
    }
    if a.min_count.is_some() || a.max_count.is_some() {
        let (lo, hi) = match spec.counts {
            CountDistribution::Uniform { min, max } => (min, max),
            CountDistribution::Fixed(c) => (c, c),
        };
        spec.counts = CountDistribution::Uniform { min: a.min_count.unwrap_or(lo), max: a.max_count.unwrap_or(hi) };
    }
    if let Some(seed) = cli.seed {
        spec.scene.seed = seed;
    }
    spec.validate()?;
    if a.dry_run {
        println!("{}", serde_json::to_string_pretty(&spec)?);
        return Ok(());
    }
    let run = new_run(cli, "generate")?;
    write_json(&run.join("config.json"), &spec)?;
    let manifest = generate_dataset(&spec, &run.join("dataset"))?;
    let summary = DatasetSummary { counts: manifest.count_stats(), normalization: None };
    write_json(&run.join("stats.json"), &summary)?;
    print_counts(&manifest.root.join(microcount::manifest::MANIFEST_FILE), &summary.counts);
    Ok(())
}

fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("patch grid must look like 2x2, got {s:?}"))?;
    Ok([r.trim().parse()?, c.trim().parse()?])
}

fn adapt(cli: &Cli, a: &AdaptArgs) -> Result<()> {
    let layout: Layout = a.layout.parse().map_err(|e: Error| {
        anyhow!(
            "{e}\n  vgg:       NNNcell.png images with NNNdots.png point annotations\n  \
             fnc:       images/ and masks/ with matching file stems\n  \
             cancer:    images plus counts.csv with image,count columns\n  \
             synthetic: a generated dataset directory with manifest.jsonl"
        )
    })?;
    let mut watershed = WatershedConfig::default();
    if let Some(s) = a.min_separation {
        watershed.min_separation = s;
    }
    if let Some(d) = a.min_depth {
        watershed.min_depth = d;
    }
    let run = new_run(cli, "adapt")?;
    let cfg = AdaptConfig {
        layout,
        input: data_path(&cli.data_root, &a.source),
        output: run.join("dataset"),
        patch_grid: a.patch_grid.as_deref().map(parse_grid).transpose()?,
        augment: a.augment,
        watershed,
    };
    write_json(&run.join("config.json"), &cfg)?;
    let manifest = adapt_dataset(&cfg)?;
    let summary = summarize(&manifest)?;
    write_json(&run.join("stats.json"), &summary)?;
    print_counts(&cfg.output.join(microcount::manifest::MANIFEST_FILE), &summary.counts);
    Ok(())
}

fn load_manifest(cli: &Cli, path: &Path) -> Result<Manifest> {
    let path = data_path(&cli.data_root, path);
    Ok(Manifest::load(&path)?)
}

fn stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let manifest = load_manifest(cli, &a.manifest)?;
    let summary = summarize(&manifest)?;
    let run = new_run(cli, "stats")?;
    write_json(&run.join("stats.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    preset: &'a str,
    model: &'a BackboneConfig,
    train: &'a TrainConfig,
    manifest: PathBuf,
    val_manifest: Option<PathBuf>,
    val_fraction: f64,
    stats: &'a NormalizationStats,
}

fn train_config(cli: &Cli, a: &TrainArgs) -> Result<TrainConfig> {
    let mut tc: TrainConfig = read_config(a.config.as_deref(), "{}")?;
    if let Some(e) = a.epochs {
        tc.max_epochs = e;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = Some(b);
    }
    if let Some(lr) = a.lr {
        tc.base_lr = lr;
    }
    if let Some(w) = a.warmup_steps {
        tc.warmup_steps = w;
    }
    if let Some(s) = cli.seed {
        tc.seed = s;
    }
    tc.validate()?;
    Ok(tc)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut model_cfg = resolve_model(&a.preset)?;
    if let Some(s) = a.input_size {
        model_cfg.input_size = s;
    }
    model_cfg.validate()?;
    let tc = train_config(cli, a)?;
    let manifest = load_manifest(cli, &a.manifest)?;
    let (train_m, val_m) = match &a.val_manifest {
        Some(v) => (manifest, load_manifest(cli, v)?),
        None => manifest.split(1.0 - a.val_fraction, tc.seed)?,
    };
    let stats = compute_dataset_stats(&train_m)?;
    let size = model_cfg.input_size;
    let train_set = TensorDataset::load(&train_m, &stats, size)?;
    let val_set = TensorDataset::load(&val_m, &stats, size)?;
    let mut model = build_backbone(&model_cfg, tc.seed)?;

    let run = new_run(cli, "train")?;
    let resolved = ResolvedTrain {
        preset: &a.preset,
        model: &model_cfg,
        train: &tc,
        manifest: data_path(&cli.data_root, &a.manifest),
        val_manifest: a.val_manifest.as_ref().map(|v| data_path(&cli.data_root, v)),
        val_fraction: a.val_fraction,
        stats: &stats,
    };
    write_json(&run.join("config.json"), &resolved)?;
    let mut report: TrainReport = match train(&mut model, &train_set, &val_set, &tc) {
        Ok(r) => r,
        Err(Error::Diverged { epoch, step, report }) => {
            report.save(&run)?;
            bail!("training diverged in epoch {epoch} after {step} updates; partial report in {}", run.display());
        }
        Err(e) => return Err(e.into()),
    };
    model.save(&run.join("model.ckpt"), Some(stats))?;
    report.checkpoint = Some(PathBuf::from("model.ckpt"));
    report.save(&run)?;
    let best = report.best_epoch.map(|e| &report.epochs[e - 1]);
    println!("run: {}", run.display());
    println!(
        "epochs: {}  stop: {:?}  best epoch: {}  best val MAE: {}",
        report.epochs.len(),
        report.stop_reason,
        report.best_epoch.map_or("-".into(), |e| e.to_string()),
        best.map_or("-".into(), |e| format!("{:.4}", e.val_mae)),
    );
    Ok(())
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let ckpt = data_path(&cli.data_root, &a.checkpoint);
    let (model, meta) = CountingModel::load(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let manifest = load_manifest(cli, &a.manifest)?;
    let stats = match meta.stats {
        Some(s) => s,
        None => {
            eprintln!("checkpoint carries no normalization statistics; using the evaluation manifest's");
            compute_dataset_stats(&manifest)?
        }
    };
    let labels = EvalLabels {
        model: a.model.clone().unwrap_or_else(|| stem_of(&ckpt)),
        dataset: a.dataset.clone().unwrap_or_else(|| {
            manifest.root.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
        }),
        seed: cli.seed,
    };
    let report = evaluate(&model, &manifest, &stats, a.batch_size, &labels)?;
    let run = new_run(cli, "eval")?;
    write_json(&run.join("eval.json"), &report)?;
    emit_report(std::slice::from_ref(&report.row), &run)?;
    for s in &report.skipped {
        eprintln!("skipped {}: {}", s.image, s.reason);
    }
    let r = &report.row;
    println!("run: {}", run.display());
    println!("images: {}  MAE: {:.4}  RMSE: {:.4}  ms/image: {:.2}", report.images, r.mae, r.rmse, r.ms_per_image);
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct CostRow {
    model: String,
    variant: String,
    params: u64,
    macs: f64,
    flops: f64,
}

fn cost_row(name: &str) -> Result<CostRow> {
    let cfg = resolve_model(name)?;
    let model = build_backbone(&cfg, 0)?;
    let cost = estimate_flops(&cfg)?;
    Ok(CostRow {
        model: name.to_string(),
        variant: cfg.family.to_string(),
        params: count_parameters(&model) as u64,
        macs: cost.total(FlopConvention::MultiplyAccumulate),
        flops: cost.total(FlopConvention::Arithmetic),
    })
}

fn cost_table(rows: &[CostRow]) -> String {
    let mut out = String::from("| Model | Family | Params (e6) | MACs (e8) | FLOPs (e8) |\n|---|---|---:|---:|---:|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.2} | {:.2} |\n",
            r.model,
            r.variant,
            r.params as f64 / 1e6,
            r.macs / 1e8,
            r.flops / 1e8
        ));
    }
    out
}

fn bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let presets: Vec<String> =
        if a.presets.is_empty() { PRESET_NAMES.iter().map(|s| s.to_string()).collect() } else { a.presets.clone() };
    let run = new_run(cli, "bench")?;
    let costs = presets.iter().map(|p| cost_row(p)).collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(run.join("costs.csv"))?;
    for r in &costs {
        w.serialize(r)?;
    }
    w.flush()?;
    let table = cost_table(&costs);
    std::fs::write(run.join("costs.md"), &table)?;
    print!("{table}");

    let Some(manifest_path) = &a.manifest else { return Ok(()) };
    let seed = cli.seed.unwrap_or(0);
    let manifest = load_manifest(cli, manifest_path)?;
    let dataset = stem_of(&manifest.root);
    let mut rows: Vec<EvalRow> = Vec::new();
    for name in &presets {
        let mut cfg = resolve_model(name)?;
        if let Some(s) = a.input_size {
            cfg.input_size = s;
        }
        let mut model = build_backbone(&cfg, seed)?;
        let (train_m, test_m) =
            if a.train_epochs > 0 { manifest.split(0.8, seed)? } else { (manifest.clone(), manifest.clone()) };
        let stats = compute_dataset_stats(&train_m)?;
        let test = TensorDataset::load(&test_m, &stats, cfg.input_size)?;
        if a.train_epochs > 0 {
            let train_set = TensorDataset::load(&train_m, &stats, cfg.input_size)?;
            let tc =
                TrainConfig { max_epochs: a.train_epochs, batch_size: Some(a.batch_size), seed, ..Default::default() };
            train(&mut model, &train_set, &test, &tc)?;
        }
        let labels = EvalLabels { model: name.clone(), dataset: dataset.clone(), seed: Some(seed) };
        let mut report = evaluate_dataset(&model, &test, a.batch_size, &labels)?;
        // Report size and cost at the preset resolution, like the cost table.
        if let Some(c) = costs.iter().find(|c| &c.model == name) {
            report.row.flops = c.macs;
            report.row.params = c.params;
        }
        eprintln!("{name}: MAE {:.3}", report.row.mae);
        rows.push(report.row);
    }
    let files = emit_report(&rows, &run)?;
    println!("{}", std::fs::read_to_string(&files.markdown)?);
    Ok(())
}

fn flops(a: &FlopsArgs) -> Result<()> {
    let r = cost_row(&a.preset)?;
    println!("preset: {}  family: {}", r.model, r.variant);
    println!("params: {} ({:.2}e6)", r.params, r.params as f64 / 1e6);
    println!("MACs at 3x384x384: {:.2}e8", r.macs / 1e8);
    println!("FLOPs (2 per MAC plus elementwise): {:.2}e8", r.flops / 1e8);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("2x3").unwrap(), [2, 3]);
        assert!(parse_grid("2by3").is_err());
    }

    #[test]
    fn toy_and_preset_names_resolve() {
        assert_eq!(resolve_model("toy-xcit").unwrap().family, Family::Xcit);
        assert_eq!(resolve_model("resnet50").unwrap().family, Family::Resnet);
        assert!(resolve_model("toy-lstm").is_err());
        assert!(resolve_model("vit-giant").is_err());
    }
}
