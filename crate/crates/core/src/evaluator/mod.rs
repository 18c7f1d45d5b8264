//! Count metrics, batched inference and comparison reports.

mod report;

use std::time::Instant;

use microcount_tensor::{FlopConvention, Graph};
use serde::{Deserialize, Serialize};

use crate::adapters::NormalizationStats;
use crate::error::{input, Result};
use crate::manifest::Manifest;
use crate::models::{count_parameters, estimate_flops, CountingModel};
use crate::trainer::{Skipped, TensorDataset};

pub use report::{aggregate, emit_report, markdown_table, read_csv, write_csv, Block, ReportFiles};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(input("metrics need at least one prediction"));
    }
    if pred.len() != truth.len() {
        return Err(input(format!("{} predictions vs {} labels", pred.len(), truth.len())));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Inference over the whole dataset in chunks of `batch`.
pub fn predict(model: &CountingModel, data: &TensorDataset, batch: usize) -> Result<Vec<f64>> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for idx in indices.chunks(batch.max(1)) {
        let (x, _) = data.batch(idx)?;
        let mut g = Graph::inference();
        let x = g.constant(x);
        let y = model.forward(&mut g, &x)?;
        out.extend(y.value().data().iter().map(|v| *v as f64));
    }
    Ok(out)
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub variant: String,
    pub dataset: String,
    pub mae: f64,
    pub rmse: f64,
    pub flops: f64,
    pub params: u64,
    pub ms_per_image: f64,
    /// Empty on rows aggregated over seeds.
    pub seed: Option<u64>,
    /// MAE after rounding predictions to the nearest non-negative integer.
    pub mae_rounded: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub row: EvalRow,
    pub images: usize,
    pub skipped: Vec<Skipped>,
    pub config_hash: String,
    pub predictions: Vec<f64>,
    pub truths: Vec<f64>,
}

/// Names attached to an evaluation row.
#[derive(Clone, Debug, Default)]
pub struct EvalLabels {
    pub model: String,
    pub dataset: String,
    pub seed: Option<u64>,
}

/// Stable 64-bit digest of the model configuration, as hex.
pub fn config_hash(model: &CountingModel) -> String {
    let json = serde_json::to_string(&model.config).unwrap_or_default();
    let h = json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    format!("{h:016x}")
}

/// Scores an already loaded dataset.
pub fn evaluate_dataset(
    model: &CountingModel,
    data: &TensorDataset,
    batch: usize,
    labels: &EvalLabels,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(input("nothing to evaluate"));
    }
    let start = Instant::now();
    let predictions = predict(model, data, batch)?;
    let ms_per_image = start.elapsed().as_secs_f64() * 1e3 / data.len() as f64;
    let truths = data.counts.clone();
    let rounded: Vec<f64> = predictions.iter().map(|p| p.round().max(0.0)).collect();
    let row = EvalRow {
        model: labels.model.clone(),
        variant: model.config.family.to_string(),
        dataset: labels.dataset.clone(),
        mae: mae(&predictions, &truths)?,
        rmse: rmse(&predictions, &truths)?,
        flops: estimate_flops(&model.config)?.total(FlopConvention::MultiplyAccumulate),
        params: count_parameters(model) as u64,
        ms_per_image,
        seed: labels.seed,
        mae_rounded: mae(&rounded, &truths)?,
    };
    Ok(EvalReport {
        row,
        images: data.len(),
        skipped: Vec::new(),
        config_hash: config_hash(model),
        predictions,
        truths,
    })
}

/// Loads `manifest`, skipping unreadable images, and scores the rest.
pub fn evaluate(
    model: &CountingModel,
    manifest: &Manifest,
    stats: &NormalizationStats,
    batch: usize,
    labels: &EvalLabels,
) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(input("manifest is empty"));
    }
    let (data, skipped) = TensorDataset::load_lenient(manifest, stats, model.config.input_size)?;
    if data.is_empty() {
        return Err(input(format!("all {} images were unreadable", skipped.len())));
    }
    let mut report = evaluate_dataset(model, &data, batch, labels)?;
    report.skipped = skipped;
    Ok(report)
}
