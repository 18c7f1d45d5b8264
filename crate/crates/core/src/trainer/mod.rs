//! Training protocol: warm-up for transformer families, plateau decay,
//! early stopping, Adam on an L1 or MSE count loss, best-validation weights.

mod data;
mod loss;
mod optim;
mod schedule;

use std::path::{Path, PathBuf};
use std::time::Instant;

use microcount_tensor::Graph;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{config, io_err, Error, Result};
use crate::evaluator::{mae, predict};
use crate::models::{CountingModel, Family};
use crate::seed::{rng, stream_seed};

pub use data::{Skipped, TensorDataset};
pub use loss::Loss;
pub use optim::Adam;
pub use schedule::{improves, warmup_lr, EarlyStopper, PlateauScheduler, StopReason};

/// Batch size used by each family when the config leaves it open.
pub fn default_batch_size(family: Family) -> usize {
    match family {
        Family::Cnn => 128,
        Family::Vit | Family::Crossvit | Family::TranscrowdG | Family::TranscrowdT | Family::Resnet => 64,
        Family::Parallelvit | Family::Deepvit | Family::Xcit => 32,
    }
}

fn default_base_lr() -> f64 {
    1e-4
}
fn default_warmup_steps() -> u64 {
    5000
}
fn default_plateau_patience() -> usize {
    5
}
fn default_plateau_factor() -> f64 {
    0.5
}
fn default_threshold() -> f64 {
    1e-4
}
fn default_early_stop_patience() -> usize {
    20
}
fn default_max_epochs() -> usize {
    400
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    /// Start of the warm-up ramp; `base_lr / 100` when unset.
    #[serde(default)]
    pub min_lr: Option<f64>,
    #[serde(default = "default_warmup_steps")]
    pub warmup_steps: u64,
    #[serde(default = "default_plateau_patience")]
    pub plateau_patience: usize,
    #[serde(default = "default_plateau_factor")]
    pub plateau_factor: f64,
    /// Relative decrease that counts as an improvement of the validation loss.
    #[serde(default = "default_threshold")]
    pub improvement_threshold: f64,
    #[serde(default = "default_early_stop_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Family default when unset.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: Loss,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let min_lr = self.min_lr();
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(min_lr >= 0.0 && min_lr <= self.base_lr) {
            return Err(config(format!("min_lr {min_lr} outside [0, base_lr]")));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(config(format!("plateau_factor must lie in (0, 1), got {}", self.plateau_factor)));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(config("patience values must be at least 1"));
        }
        if self.max_epochs == 0 || self.batch_size == Some(0) {
            return Err(config("max_epochs and batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.improvement_threshold) {
            return Err(config("improvement_threshold must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(config("Adam betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }

    pub fn min_lr(&self) -> f64 {
        self.min_lr.unwrap_or(self.base_lr / 100.0)
    }

    pub fn batch_size_for(&self, family: Family) -> usize {
        self.batch_size.unwrap_or_else(|| default_batch_size(family))
    }
}

/// One row of the loss curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    /// Rate used by the last update of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub family: Family,
    pub config: TrainConfig,
    pub batch_size: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub epochs: Vec<EpochRecord>,
    /// Rate of every update, in order.
    pub lr_trace: Vec<f64>,
    /// Mini-batch loss of every update, in order.
    pub loss_trace: Vec<f64>,
    pub stop_reason: StopReason,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Writes `report.json` and `loss_curve.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|source| Error::Json { context: "train report".into(), source })?;
        let path = dir.join("report.json");
        std::fs::write(&path, json).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_path(dir.join("loss_curve.csv"))?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(io_err(dir.join("loss_curve.csv")))?;
        Ok(())
    }
}

/// Trains `model` in place and leaves it holding the best-validation weights.
///
/// Non-finite losses abort with [`Error::Diverged`], which carries the
/// report up to that point.
pub fn train(
    model: &mut CountingModel,
    train_set: &TensorDataset,
    val_set: &TensorDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(crate::error::input("training and validation splits must be non-empty"));
    }
    for d in [train_set, val_set] {
        if d.size != model.config.input_size {
            return Err(crate::error::input(format!(
                "images are {}px but the model expects {}px",
                d.size, model.config.input_size
            )));
        }
    }
    let start = Instant::now();
    let family = model.config.family;
    let batch = cfg.batch_size_for(family);
    let warmup = family.is_transformer();
    let mut report = TrainReport {
        family,
        config: cfg.clone(),
        batch_size: batch,
        train_size: train_set.len(),
        val_size: val_set.len(),
        epochs: Vec::new(),
        lr_trace: Vec::new(),
        loss_trace: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: None,
        best_val_loss: f64::INFINITY,
        wall_time_s: 0.0,
        checkpoint: None,
    };
    let mut adam = Adam::new(&model.store, cfg.beta1, cfg.beta2, cfg.eps);
    let mut plateau =
        PlateauScheduler::new(cfg.base_lr, cfg.plateau_factor, cfg.plateau_patience, cfg.improvement_threshold);
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience, cfg.max_epochs, cfg.improvement_threshold);
    let mut shuffle = rng(stream_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_weights = None;
    let val_targets = &val_set.counts;
    let mut step = 0u64;

    let diverged = |mut report: TrainReport, epoch: usize| {
        report.stop_reason = StopReason::Diverged;
        report.wall_time_s = start.elapsed().as_secs_f64();
        Error::Diverged { epoch, step: report.loss_trace.len(), report: Box::new(report) }
    };

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        let mut lr = plateau.lr;
        for idx in order.chunks(batch) {
            // The ramp scales whatever rate the plateau schedule currently allows.
            lr = if warmup {
                plateau.lr * warmup_lr(step, cfg.base_lr, cfg.min_lr(), cfg.warmup_steps) / cfg.base_lr
            } else {
                plateau.lr
            };
            let (x, y) = train_set.batch(idx)?;
            let mut g = Graph::new();
            let xv = g.constant(x);
            let yv = g.constant(y);
            let pred = model.forward(&mut g, &xv)?;
            let loss = cfg.loss.apply(&mut g, &pred, &yv)?;
            let value = loss.value().item()? as f64;
            report.loss_trace.push(value);
            report.lr_trace.push(lr);
            if !value.is_finite() {
                return Err(diverged(report, epoch));
            }
            model.store.zero_grad();
            g.backward(&loss, &mut model.store)?;
            g.commit_buffers(&mut model.store)?;
            adam.update(&mut model.store, lr);
            sum += value * idx.len() as f64;
            step += 1;
        }
        let preds = predict(model, val_set, batch)?;
        let val_loss = cfg.loss.value(&preds, val_targets)?;
        let val_mae = mae(&preds, val_targets)?;
        report.epochs.push(EpochRecord { epoch, train_loss: sum / train_set.len() as f64, val_loss, val_mae, lr });
        if !val_loss.is_finite() {
            return Err(diverged(report, epoch));
        }
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = Some(epoch);
            best_weights = Some(model.store.snapshot());
        }
        plateau.observe(val_loss);
        if let Some(reason) = stopper.observe(val_loss) {
            report.stop_reason = reason;
            break;
        }
    }
    if let Some(w) = best_weights {
        model.store.restore(w)?;
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
