//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Settings for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f32,
    /// Lower bound on the denominator of the relative error, so that
    /// near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
    /// Parameters with more scalars than this are checked on a random subset.
    pub max_coords_per_param: usize,
    pub seed: u64,
    /// For piecewise-linear functions: when the central difference straddles
    /// a kink, accept the analytic value if it matches either one-sided
    /// difference. A wrong gradient disagrees with both sides and still fails.
    pub one_sided_at_kinks: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-3, floor: 1.0, tolerance: 1e-3, max_coords_per_param: 16, seed: 0, one_sided_at_kinks: false }
    }
}

/// Worst disagreement found.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradMismatch>,
    pub tolerance: f64,
    /// Coordinates accepted through a one-sided difference.
    pub one_sided: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Fixed weights that fold a non-scalar output into a scalar objective.
pub fn output_weights(n: usize) -> Vec<f32> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| ((i as f32) * 0.618).sin() + 0.3).collect()
}

/// Compares reverse-mode gradients with central differences over the
/// trainable entries of `store`.
///
/// `f` may return any shape; a non-scalar output `y` is checked through the
/// objective `Σ wᵢ·yᵢ` with weights from [`output_weights`]. The numeric side
/// sums that objective in f64 so only the rounding of the individual outputs
/// enters the finite difference.
///
/// `f` is evaluated on a training-mode graph each time; buffer updates it
/// produces are discarded so every evaluation sees the same state.
pub fn grad_check<F>(store: &mut ParamStore, mut f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut graph = Graph::new();
    let out = f(&mut graph, store)?;
    let weights = output_weights(out.value().numel());
    let w = Var::constant(Tensor::from_vec(out.shape().to_vec(), weights.clone())?);
    let mixed = graph.mul(&out, &w)?;
    let objective = graph.sum_all(&mixed)?;
    graph.backward(&objective, store)?;
    drop(graph);

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::with_mode(false, true);
        let v = f(&mut g, store)?;
        if v.value().numel() != weights.len() {
            return Err(TensorError::Invalid("output size changed between evaluations".into()));
        }
        Ok(v.value().data().iter().zip(&weights).map(|(y, w)| *y as f64 * *w as f64).sum())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report =
        GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None, tolerance: cfg.tolerance, one_sided: 0 };
    let center = if cfg.one_sided_at_kinks { eval(store)? } else { 0.0 };
    let ids: Vec<_> = store.trainable_ids().collect();
    for id in ids {
        let n = store.value(id).numel();
        let coords: Vec<usize> = if n <= cfg.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, cfg.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        let analytic: Vec<f64> = match store.grad(id) {
            Some(g) => coords.iter().map(|&i| g[i] as f64).collect(),
            None => vec![0.0; coords.len()],
        };
        for (&i, &a) in coords.iter().zip(&analytic) {
            let orig = store.value(id).data()[i];
            store.value_mut(id)[i] = orig + cfg.step;
            let plus = eval(store)?;
            store.value_mut(id)[i] = orig - cfg.step;
            let minus = eval(store)?;
            store.value_mut(id)[i] = orig;
            // The perturbation actually applied, after f32 rounding.
            let h = ((orig + cfg.step) as f64 - (orig - cfg.step) as f64) / 2.0;
            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(TensorError::Invalid(format!("non-finite loss while perturbing {}[{i}]", store.name(id))));
            }
            let mut err = relative_error(a, numeric, cfg.floor);
            if cfg.one_sided_at_kinks && err >= cfg.tolerance {
                let right = (plus - center) / ((orig + cfg.step) as f64 - orig as f64);
                let left = (center - minus) / (orig as f64 - (orig - cfg.step) as f64);
                let sided = relative_error(a, right, cfg.floor).min(relative_error(a, left, cfg.floor));
                if sided < cfg.tolerance {
                    err = sided;
                    report.one_sided += 1;
                }
            }
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(GradMismatch { param: store.name(id).to_string(), index: i, analytic: a, numeric });
            }
        }
    }
    Ok(report)
}
