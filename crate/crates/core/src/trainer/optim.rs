//! Adam with bias correction.

use microcount_tensor::{ParamId, ParamStore};

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(ParamId, Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let moments = store
            .trainable_ids()
            .map(|id| {
                let n = store.value(id).numel();
                (id, vec![0.0; n], vec![0.0; n])
            })
            .collect();
        Self { beta1, beta2, eps, step: 0, moments }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update with the gradients currently accumulated in `store`.
    /// Parameters without a gradient keep their moments and values.
    pub fn update(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / c1) as f32;
        let c2 = c2 as f32;
        let eps = self.eps as f32;
        for (id, m, v) in &mut self.moments {
            let (value, grad) = store.value_and_grad_mut(*id);
            let Some(grad) = grad else { continue };
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                value[i] -= step_size * m[i] / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use microcount_tensor::Tensor;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.trainable("w", Tensor::from_vec([3], vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        store.accumulate_grad(id, &[2.0, -0.5, 0.0]);
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        adam.update(&mut store, 0.1);
        let w = store.value(id).data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] - 1.1).abs() < 1e-6);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.trainable("w", Tensor::from_vec([2], vec![3.0, -4.0]).unwrap()).unwrap();
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        for _ in 0..2000 {
            store.zero_grad();
            let g: Vec<f32> = store.value(id).data().iter().map(|w| 2.0 * w).collect();
            store.accumulate_grad(id, &g);
            adam.update(&mut store, 0.01);
        }
        assert!(store.value(id).data().iter().all(|w| w.abs() < 1e-2));
    }
}
