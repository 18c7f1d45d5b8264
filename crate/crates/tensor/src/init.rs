//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::{numel, Tensor};

/// Normal samples with the given standard deviation, redrawn until they fall
/// inside two standard deviations.
pub fn trunc_normal(shape: impl Into<Vec<usize>>, std: f32, rng: &mut impl Rng) -> Tensor {
    let shape = shape.into();
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let data = (0..numel(&shape))
        .map(|_| loop {
            let z = normal.sample(rng);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::from_parts(shape, data)
}

/// He initialization for layers followed by a rectifier.
pub fn kaiming_normal(shape: impl Into<Vec<usize>>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let std = (2.0 / fan_in.max(1) as f32).sqrt();
    let shape = shape.into();
    let normal = Normal::new(0.0f32, std).expect("finite std");
    let data = (0..numel(&shape)).map(|_| normal.sample(rng)).collect();
    Tensor::from_parts(shape, data)
}

pub fn uniform(shape: impl Into<Vec<usize>>, low: f32, high: f32, rng: &mut impl Rng) -> Tensor {
    let shape = shape.into();
    let dist = Uniform::new_inclusive(low, high).expect("ordered bounds");
    let data = (0..numel(&shape)).map(|_| dist.sample(rng)).collect();
    Tensor::from_parts(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truncation_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = trunc_normal([1000], 0.02, &mut rng);
        assert!(t.data().iter().all(|v| v.abs() <= 0.04));
        let mean: f32 = t.data().iter().sum::<f32>() / 1000.0;
        assert!(mean.abs() < 0.003);
    }
}
