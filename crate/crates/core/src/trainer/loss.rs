use microcount_tensor::{Graph, Var};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Mean absolute error.
    #[default]
    L1,
    /// Mean squared error.
    Mse,
}

impl Loss {
    /// Differentiable loss of `[B]` predictions against `[B]` targets.
    pub fn apply(self, g: &mut Graph, pred: &Var, target: &Var) -> Result<Var> {
        if pred.shape() != target.shape() {
            return Err(input(format!("{:?} predictions vs {:?} targets", pred.shape(), target.shape())));
        }
        let d = g.sub(pred, target)?;
        let e = match self {
            Loss::L1 => g.abs(&d)?,
            Loss::Mse => g.square(&d)?,
        };
        Ok(g.mean_all(&e)?)
    }

    /// The same quantity accumulated in f64.
    pub fn value(self, pred: &[f64], target: &[f64]) -> Result<f64> {
        if pred.len() != target.len() || pred.is_empty() {
            return Err(input(format!("{} predictions vs {} targets", pred.len(), target.len())));
        }
        let sum: f64 = pred
            .iter()
            .zip(target)
            .map(|(p, t)| match self {
                Loss::L1 => (p - t).abs(),
                Loss::Mse => (p - t) * (p - t),
            })
            .sum();
        Ok(sum / pred.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use microcount_tensor::{ParamStore, Tensor};

    fn graph_loss(loss: Loss, p: &[f32], t: &[f32]) -> (f32, Vec<f32>) {
        let mut store = ParamStore::new();
        let id = store.trainable("p", Tensor::from_vec([p.len()], p.to_vec()).unwrap()).unwrap();
        let mut g = Graph::new();
        let pv = g.param(&store, id);
        let tv = g.constant(Tensor::from_vec([t.len()], t.to_vec()).unwrap());
        let l = loss.apply(&mut g, &pv, &tv).unwrap();
        g.backward(&l, &mut store).unwrap();
        (l.value().item().unwrap(), store.grad(id).unwrap().to_vec())
    }

    #[test]
    fn l1_value_and_subgradient() {
        let (v, g) = graph_loss(Loss::L1, &[2.0, 2.0, 5.0], &[1.0, 3.0, 3.0]);
        assert!((v - 4.0 / 3.0).abs() < 1e-6);
        let third = 1.0 / 3.0;
        for (a, b) in g.iter().zip([third, -third, third]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(Loss::L1.value(&[2.0, 2.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        assert_eq!(graph_loss(Loss::Mse, &[1.0, 4.0], &[1.0, 4.0]).0, 0.0);
        assert_eq!(Loss::L1.value(&[7.0], &[7.0]).unwrap(), 0.0);
    }

    #[test]
    fn mse_matches_definition() {
        let (v, g) = graph_loss(Loss::Mse, &[2.0, 2.0, 5.0], &[1.0, 2.0, 3.0]);
        assert!((v - 5.0 / 3.0).abs() < 1e-6);
        assert!((g[2] - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(Loss::L1.value(&[1.0], &[1.0, 2.0]).is_err());
        assert!(Loss::Mse.value(&[], &[]).is_err());
    }
}
