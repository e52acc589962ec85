use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::LocationScatterModel;
use crate::linalg;

/// Seeded draws from the Gaussian member of a Location-Scatter model.
///
/// Each call to [`GaussianSampler::draw`] restarts the stream from the seed,
/// so the output depends only on `(seed, count)`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    seed: u64,
}

impl GaussianSampler {
    pub fn new(model: &LocationScatterModel, seed: u64) -> Self {
        Self {
            mean: model.mean.clone(),
            // Symmetric root rather than Cholesky: scatters may be singular.
            factor: linalg::sqrtm_psd(&model.scatter),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Calls `f` on each of `count` draws, in order.
    pub fn for_each(&self, count: usize, mut f: impl FnMut(&DVector<f64>)) {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let n = self.mean.len();
        let mut z = DVector::zeros(n);
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let k = &self.mean + &self.factor * &z;
            f(&k);
        }
    }

    pub fn draw(&self, count: usize) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(count);
        self.for_each(count, |k| out.push(k.clone()));
        out
    }
}
