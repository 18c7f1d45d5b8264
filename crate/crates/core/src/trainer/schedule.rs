//! Learning-rate warm-up, plateau decay and early stopping as explicit
//! per-step / per-epoch state machines.

use serde::{Deserialize, Serialize};

/// Linear ramp from `min_lr` at step 0 to `base_lr` at `warmup_steps`, flat after.
pub fn warmup_lr(step: u64, base_lr: f64, min_lr: f64, warmup_steps: u64) -> f64 {
    if warmup_steps == 0 {
        return base_lr;
    }
    let t = (step as f64 / warmup_steps as f64).min(1.0);
    min_lr + (base_lr - min_lr) * t
}

/// Whether `loss` beats `best` by more than a relative `threshold`.
pub fn improves(loss: f64, best: f64, threshold: f64) -> bool {
    loss < best * (1.0 - threshold) || (best.is_infinite() && loss.is_finite())
}

/// Multiplies the rate by `factor` after `patience` epochs without improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub best: f64,
    pub bad_epochs: usize,
    pub reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Self { lr, factor, patience, threshold, best: f64::INFINITY, bad_epochs: 0, reductions: 0 }
    }

    /// Records one epoch's validation loss and returns the rate for the next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if improves(val_loss, self.best, self.threshold) {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.reductions += 1;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No validation improvement within the patience window.
    Plateau,
    /// Reached the epoch cap.
    MaxEpochs,
    /// A loss became NaN or infinite.
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub max_epochs: usize,
    pub threshold: f64,
    pub best: f64,
    pub bad_epochs: usize,
    pub epoch: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, max_epochs: usize, threshold: f64) -> Self {
        Self { patience, max_epochs, threshold, best: f64::INFINITY, bad_epochs: 0, epoch: 0 }
    }

    /// Records one finished epoch; `Some` means training ends here.
    pub fn observe(&mut self, val_loss: f64) -> Option<StopReason> {
        self.epoch += 1;
        if improves(val_loss, self.best, self.threshold) {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs >= self.patience {
            Some(StopReason::Plateau)
        } else if self.epoch >= self.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_midpoint() {
        let min = 1e-6;
        assert_eq!(warmup_lr(0, 1e-4, min, 5000), min);
        assert!((warmup_lr(5000, 1e-4, min, 5000) - 1e-4).abs() < 1e-18);
        assert!((warmup_lr(2500, 1e-4, min, 5000) - (min + 1e-4) / 2.0).abs() < 1e-18);
        assert_eq!(warmup_lr(9000, 1e-4, min, 5000), 1e-4);
        assert_eq!(warmup_lr(0, 1e-4, min, 0), 1e-4);
    }

    #[test]
    fn improving_sequence_keeps_rate() {
        let mut s = PlateauScheduler::new(1e-4, 0.5, 5, 1e-4);
        for i in 0..30 {
            assert_eq!(s.observe(10.0 - i as f64 * 0.1), 1e-4);
        }
    }

    #[test]
    fn plateaus_apply_factor_each_time() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 5, 1e-4);
        s.observe(1.0);
        for _ in 0..4 {
            assert_eq!(s.observe(1.0), 1.0);
        }
        assert_eq!(s.observe(1.0), 0.5);
        for _ in 0..4 {
            assert_eq!(s.observe(1.0), 0.5);
        }
        assert_eq!(s.observe(1.0), 0.25);
        assert_eq!(s.reductions, 2);
    }

    #[test]
    fn tiny_relative_gain_is_not_improvement() {
        assert!(!improves(1.0 - 1e-5, 1.0, 1e-4));
        assert!(improves(1.0 - 1e-3, 1.0, 1e-4));
        assert!(improves(5.0, f64::INFINITY, 1e-4));
    }

    #[test]
    fn stops_twenty_epochs_after_last_improvement() {
        let mut e = EarlyStopper::new(20, 400, 1e-4);
        for i in 0..10 {
            assert_eq!(e.observe(10.0 - i as f64), None);
        }
        for k in 1..20 {
            assert_eq!(e.observe(5.0), None, "epoch {k}");
        }
        assert_eq!(e.observe(5.0), Some(StopReason::Plateau));
        assert_eq!(e.epoch, 30);
    }

    #[test]
    fn late_improvement_resets_counter() {
        let mut e = EarlyStopper::new(20, 400, 1e-4);
        e.observe(1.0);
        for _ in 0..18 {
            assert_eq!(e.observe(1.0), None);
        }
        assert_eq!(e.observe(0.5), None);
        for _ in 0..19 {
            assert_eq!(e.observe(0.5), None);
        }
        assert_eq!(e.observe(0.5), Some(StopReason::Plateau));
    }

    #[test]
    fn monotone_improvement_hits_cap() {
        let mut e = EarlyStopper::new(20, 400, 1e-4);
        let mut last = None;
        for i in 0..400 {
            last = e.observe(1000.0 - i as f64);
            if i < 399 {
                assert_eq!(last, None);
            }
        }
        assert_eq!(last, Some(StopReason::MaxEpochs));
    }
}
