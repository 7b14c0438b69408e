//! Exact Gaussian samples of a Hurst-1/4 fractional Brownian motion on a
//! finite grid, used to self-test the scaling and covariance estimators.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::TheoryConstants;

pub const MAX_GRID: usize = 64;

pub struct FbmSampler {
    times: Vec<f64>,
    factor: DMatrix<f64>,
}

impl FbmSampler {
    pub fn new(times: &[f64], sigma2: f64) -> Result<Self> {
        if times.is_empty() || times.len() > MAX_GRID || times.iter().any(|&t| t <= 0.0) {
            return Err(Error::Degenerate(format!(
                "fBM grid needs 1..={MAX_GRID} positive times"
            )));
        }
        let n = times.len();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            TheoryConstants::fbm_cov(sigma2, times[i], times[j])
        });
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::Degenerate("fBM covariance not positive definite".into()))?;
        Ok(FbmSampler {
            times: times.to_vec(),
            factor: chol.l(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.times.len(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        (&self.factor * z).iter().copied().collect()
    }
}
