use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Scalar, Tensor};

/// Seeded source for parameter initialization.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn normal<T: Scalar>(&mut self, shape: &[usize], std: f64) -> Tensor<T> {
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *x = T::of(z * std);
        }
        t
    }

    /// He-style initialization for a layer with `fan_in` inputs.
    pub fn he<T: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        self.normal(shape, (2.0 / fan_in.max(1) as f64).sqrt())
    }

    pub fn xavier<T: Scalar>(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
        self.normal(shape, (2.0 / (fan_in + fan_out).max(1) as f64).sqrt())
    }
}
