//! Ensembles and the statistical checks run on them.

pub mod ensemble;
pub mod fbm;
pub mod hypothesis;
pub mod moments;
pub mod scaling;

use rand::Rng;

use crate::lattice::{SeedSpec, StreamTag};

pub use ensemble::{run_ensemble, EnsembleSummary, GridObservation, Observable, ReplicateRecord};
pub use hypothesis::{
    chi_square_geometric, chi_square_gof, ks_lattice, ks_one_sample, ks_two_sample,
    ks_two_sample_threshold, ChiSquareResult, KsResult,
};
pub use moments::{tree_merge, MomentAccumulator};
pub use scaling::{
    covariance_check, limiting_constants, max_moment_scaling, modulus_diagnostic,
    tagged_current_gap, variance_scaling,
};

/// Limit constants of the current and the tagged particle at density `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub rho: f64,
    /// `sqrt(2/pi) rho (1 - rho)`.
    pub sigma2_j: f64,
    /// `sqrt(2/pi) (1 - rho) / rho`.
    pub sigma2_x: f64,
    /// `1 / sqrt(2 pi)`, the limit of `E[K(t)] / sqrt(t)`.
    pub k_limit: f64,
}

impl TheoryConstants {
    pub fn new(rho: f64) -> Self {
        let c = (2.0 / std::f64::consts::PI).sqrt();
        TheoryConstants {
            rho,
            sigma2_j: c * rho * (1.0 - rho),
            sigma2_x: c * (1.0 - rho) / rho,
            k_limit: 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }

    /// Covariance `(sigma2/2)(sqrt t + sqrt s - sqrt|t - s|)` of a
    /// fractional Brownian motion with Hurst index 1/4.
    pub fn fbm_cov(sigma2: f64, t: f64, s: f64) -> f64 {
        0.5 * sigma2 * (t.sqrt() + s.sqrt() - (t - s).abs().sqrt())
    }
}

/// Nonparametric bootstrap over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Bootstrap {
            resamples: 200,
            seed: 0x5eed,
        }
    }
}

impl Bootstrap {
    pub fn new(resamples: usize, seed: u64) -> Self {
        Bootstrap { resamples, seed }
    }

    /// Replicate indices of resample `b` out of `n` replicates.
    pub fn indices(&self, b: usize, n: usize) -> Vec<usize> {
        let mut rng = SeedSpec::new(self.seed).stream(StreamTag::Bootstrap, b as i64);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    }

    /// Values of `stat` over all resamples.
    pub fn replicates<F: Fn(&[usize]) -> f64>(&self, n: usize, stat: F) -> Vec<f64> {
        (0..self.resamples)
            .map(|b| stat(&self.indices(b, n)))
            .collect()
    }

    /// Bootstrap standard error of `stat`.
    pub fn standard_error<F: Fn(&[usize]) -> f64>(&self, n: usize, stat: F) -> f64 {
        sample_sd(&self.replicates(n, stat))
    }
}

pub(crate) fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = sample_mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let mx = sample_mean(x);
    let my = sample_mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_at_half() {
        let c = TheoryConstants::new(0.5);
        assert!((c.sigma2_j - 0.199471).abs() < 1e-6);
        assert!((c.sigma2_x - 0.797885).abs() < 1e-6);
        assert!((c.k_limit - 0.398942).abs() < 1e-6);
        assert!((TheoryConstants::fbm_cov(c.sigma2_j, 1.0, 0.25) - 0.063230).abs() < 1e-6);
        for t in [0.1, 1.0, 7.0] {
            assert!((TheoryConstants::fbm_cov(2.0, t, t) - 2.0 * t.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_positive_inside() {
        for rho in [0.01, 0.3, 0.99] {
            let c = TheoryConstants::new(rho);
            assert!(c.sigma2_j > 0.0 && c.sigma2_x > 0.0 && c.k_limit > 0.0);
        }
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 1.0).collect();
        let (s, i) = ols(&x, &y);
        assert!((s - 0.5).abs() < 1e-12 && (i + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let xs = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert!((quantile(&xs, 0.9) - 4.6).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let b = Bootstrap::default();
        assert_eq!(b.indices(3, 10), b.indices(3, 10));
        assert_ne!(b.indices(3, 10), b.indices(4, 10));
    }
}
