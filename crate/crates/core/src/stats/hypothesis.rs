//! Goodness-of-fit tests: Kolmogorov-Smirnov (one- and two-sample) and
//! Pearson chi-square.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Smallest p-value reported.
pub const P_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `P(K > x)` from its alternating series,
/// truncated once terms drop below `1e-10`. For small `x` the dual theta
/// series is used instead, where the alternating one converges slowly.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let p = if x < 1.0 {
        // P(K <= x) = sqrt(2 pi) / x sum_k exp(-(2k-1)^2 pi^2 / (8 x^2))
        let pi2 = std::f64::consts::PI.powi(2);
        let mut cdf = 0.0;
        for k in 1.. {
            let term = (-((2 * k - 1) as f64).powi(2) * pi2 / (8.0 * x * x)).exp();
            cdf += term;
            if term < 1e-10 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * cdf
    } else {
        let mut sum = 0.0;
        for k in 1.. {
            let term = (-2.0 * (k * k) as f64 * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-10 {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(P_FLOOR, 1.0)
}

/// One-sample KS test of `sample` against a continuous `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    }
}

/// KS distance of an integer-valued sample from a continuous reference
/// with the continuity correction: the empirical cdf at each integer `k`
/// is compared with `cdf(k + 1/2)`.
pub fn ks_lattice<F: Fn(f64) -> f64>(sample: &[i64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_unstable();
    let n = xs.len() as f64;
    let (lo, hi) = (xs[0] - 1, xs[xs.len() - 1]);
    let mut d: f64 = 0.0;
    let mut idx = 0;
    for k in lo..=hi {
        while idx < xs.len() && xs[idx] <= k {
            idx += 1;
        }
        d = d.max((idx as f64 / n - cdf(k as f64 + 0.5)).abs());
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    }
}

/// Two-sample KS statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(en * d),
    }
}

/// Asymptotic two-sample rejection threshold `c(alpha) sqrt((n+m)/(n m))`.
pub fn ks_two_sample_threshold(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::Degenerate(
            "chi-square needs matching cells, at least two".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Degenerate("chi-square on an empty sample".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        let e = total as f64 * p;
        if e <= 0.0 {
            return Err(Error::Degenerate("cell with zero expected count".into()));
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: dist.sf(stat).max(P_FLOOR),
    })
}

/// Chi-square of positive integers against `P(k) = rho (1-rho)^(k-1)`.
/// Cells `1..=K` keep expected counts of at least 5; the last cell collects
/// the tail `k > K`.
pub fn chi_square_geometric(sample: &[u64], rho: f64) -> Result<ChiSquareResult> {
    let n = sample.len() as f64;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidDensity(
            rho,
            "geometric chi-square needs 0 < rho < 1",
        ));
    }
    let pmf = |k: u64| rho * (1.0 - rho).powi(k as i32 - 1);
    let tail = |k: u64| (1.0 - rho).powi(k as i32); // P(X > k)
    let mut cells = 1u64;
    while n * pmf(cells + 1) >= 5.0 && n * tail(cells + 1) >= 5.0 {
        cells += 1;
    }
    let mut observed = vec![0u64; cells as usize + 1];
    for &k in sample {
        if k == 0 {
            return Err(Error::Degenerate("geometric sample contains 0".into()));
        }
        let c = (k.min(cells + 1) - 1) as usize;
        observed[c] += 1;
    }
    let mut probs: Vec<f64> = (1..=cells).map(pmf).collect();
    probs.push(tail(cells));
    chi_square_gof(&observed, &probs)
}
