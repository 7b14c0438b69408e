//! Scaling diagnostics: variance growth, limit constants, the fBM
//! covariance, maximal moments, the path modulus and the gap between the
//! tagged particle and the rescaled current.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::stats::ensemble::{EnsembleSummary, Observable};
use crate::stats::{ols, quantile, Bootstrap, TheoryConstants};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
}

fn variance_of(panel: &[Vec<f64>], idx: &[usize], col: usize) -> f64 {
    let n = idx.len() as f64;
    let m = idx.iter().map(|&r| panel[r][col]).sum::<f64>() / n;
    idx.iter()
        .map(|&r| (panel[r][col] - m).powi(2))
        .sum::<f64>()
        / (n - 1.0)
}

fn log_variance_slope(times: &[f64], panel: &[Vec<f64>], idx: &[usize]) -> f64 {
    let lx: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = (0..times.len())
        .map(|c| variance_of(panel, idx, c).ln())
        .collect();
    ols(&lx, &ly).0
}

/// Slope of `ln Var` against `ln t` for `panel[replicate][time]`.
pub fn variance_scaling_panel(
    times: &[f64],
    panel: &[Vec<f64>],
    boot: &Bootstrap,
) -> Result<ScalingFit> {
    if times.len() < 4 || times[times.len() - 1] < 10.0 * times[0] {
        return Err(Error::Degenerate(
            "variance scaling needs at least 4 times spanning a decade".into(),
        ));
    }
    if panel.len() < 2 {
        return Err(Error::Degenerate(
            "variance scaling needs at least 2 replicates".into(),
        ));
    }
    let all: Vec<usize> = (0..panel.len()).collect();
    let values: Vec<f64> = (0..times.len())
        .map(|c| variance_of(panel, &all, c))
        .collect();
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let slope = log_variance_slope(times, panel, &all);
    let stderr = boot.standard_error(panel.len(), |idx| log_variance_slope(times, panel, idx));
    Ok(ScalingFit {
        times: times.to_vec(),
        values,
        slope,
        stderr,
    })
}

fn panel_of(summary: &EnsembleSummary, obs: Observable) -> Vec<Vec<f64>> {
    summary
        .records
        .iter()
        .map(|r| r.rows.iter().map(|o| o.value(obs)).collect())
        .collect()
}

/// Variance growth exponent of `obs` over the grid of `summary`.
pub fn variance_scaling(
    summary: &EnsembleSummary,
    obs: Observable,
    boot: &Bootstrap,
) -> Result<ScalingFit> {
    variance_scaling_panel(&summary.grid, &panel_of(summary, obs), boot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitEntry {
    pub name: &'static str,
    pub time: f64,
    pub value: f64,
    pub se: f64,
    pub theory: f64,
}

impl LimitEntry {
    pub fn relative_error(&self) -> f64 {
        self.value / self.theory - 1.0
    }
}

/// `Var J / sqrt t`, `Var X / sqrt t`, `Var (X - X(0)) / sqrt t` and
/// `mean K / sqrt t` at the last grid time.
pub fn limiting_constants(summary: &EnsembleSummary) -> Result<Vec<LimitEntry>> {
    let ti = summary.grid.len() - 1;
    let t = summary.grid[ti];
    if t < 256.0 {
        return Err(Error::Degenerate(format!(
            "limit constants need t >= 256, grid ends at {t}"
        )));
    }
    let th = TheoryConstants::new(summary.rho);
    let root = t.sqrt();
    let j = summary.accumulator(Observable::J, ti);
    let x = summary.accumulator(Observable::X, ti);
    let k = summary.accumulator(Observable::K, ti);
    let mut z = crate::stats::MomentAccumulator::new();
    for v in summary.displacement_column(ti) {
        z.push(v);
    }
    Ok(vec![
        LimitEntry {
            name: "var_J",
            time: t,
            value: j.variance() / root,
            se: j.se_variance() / root,
            theory: th.sigma2_j,
        },
        LimitEntry {
            name: "var_X",
            time: t,
            value: x.variance() / root,
            se: x.se_variance() / root,
            theory: th.sigma2_x,
        },
        LimitEntry {
            name: "var_Z",
            time: t,
            value: z.variance() / root,
            se: z.se_variance() / root,
            theory: th.sigma2_x,
        },
        LimitEntry {
            name: "mean_K",
            time: t,
            value: k.mean() / root,
            se: k.se_mean() / root,
            theory: th.k_limit,
        },
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEntry {
    pub t: f64,
    pub s: f64,
    pub empirical: f64,
    pub se: f64,
    pub theory: f64,
}

impl CovarianceEntry {
    /// Allowed deviation `max(15% of theory, 4 SE)`.
    pub fn tolerance(&self) -> f64 {
        (0.15 * self.theory.abs()).max(4.0 * self.se)
    }

    pub fn holds(&self) -> bool {
        (self.empirical - self.theory).abs() <= self.tolerance()
    }
}

fn covariance(panel: &[Vec<f64>], idx: &[usize], a: usize, b: usize) -> f64 {
    let n = idx.len() as f64;
    let ma = idx.iter().map(|&r| panel[r][a]).sum::<f64>() / n;
    let mb = idx.iter().map(|&r| panel[r][b]).sum::<f64>() / n;
    idx.iter()
        .map(|&r| (panel[r][a] - ma) * (panel[r][b] - mb))
        .sum::<f64>()
        / (n - 1.0)
}

/// Empirical `cov(lambda^{-1/4} J(lambda t), lambda^{-1/4} J(lambda s))`
/// for every ordered pair `t >= s` of `grid`, against the fBM covariance.
/// `panel[replicate][i]` holds `J(lambda grid[i])`.
pub fn covariance_check(
    panel: &[Vec<f64>],
    grid: &[f64],
    lambda: f64,
    sigma2: f64,
    boot: &Bootstrap,
) -> Vec<CovarianceEntry> {
    let scale = lambda.sqrt();
    let all: Vec<usize> = (0..panel.len()).collect();
    let mut out = Vec::new();
    for a in 0..grid.len() {
        for b in 0..=a {
            let empirical = covariance(panel, &all, a, b) / scale;
            let se = boot.standard_error(panel.len(), |idx| covariance(panel, idx, a, b) / scale);
            out.push(CovarianceEntry {
                t: grid[a],
                s: grid[b],
                empirical,
                se,
                theory: TheoryConstants::fbm_cov(sigma2, grid[a], grid[b]),
            });
        }
    }
    out
}

/// Panel of `J(lambda t)` for `t` in `grid`, read from integer-time paths.
pub fn path_panel(paths: &[&[i64]], grid: &[f64], lambda: f64) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<usize> = grid
        .iter()
        .map(|&t| {
            let x = lambda * t;
            if (x - x.round()).abs() > 1e-9 {
                Err(Error::Degenerate(format!(
                    "lambda t = {x} is not an integer time"
                )))
            } else {
                Ok(x.round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    paths
        .iter()
        .map(|p| {
            cols.iter()
                .map(|&c| {
                    p.get(c)
                        .map(|&v| v as f64)
                        .ok_or_else(|| Error::Degenerate(format!("path shorter than time {c}")))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMomentScaling {
    pub m: Vec<usize>,
    /// `mean over replicates of max_{1<=i<=m} J(i)^p`.
    pub means: Vec<f64>,
    pub slope: f64,
}

/// Growth of `E[max_{i<=m} J(i)^p]` in `m` from integer-time paths.
pub fn max_moment_scaling(paths: &[&[i64]], p: i32, m_grid: &[usize]) -> Result<MaxMomentScaling> {
    let m_max = m_grid.iter().copied().max().unwrap_or(0);
    if paths.is_empty() || paths.iter().any(|q| q.len() <= m_max) || m_grid.contains(&0) {
        return Err(Error::Degenerate(
            "paths must cover every m >= 1 of the grid".into(),
        ));
    }
    let mut sums = vec![0.0; m_grid.len()];
    for path in paths {
        let mut running = 0.0f64;
        let mut next = 0;
        let mut order: Vec<usize> = (0..m_grid.len()).collect();
        order.sort_by_key(|&g| m_grid[g]);
        for i in 1..=m_max {
            running = running.max((path[i] as f64).powi(p));
            while next < order.len() && m_grid[order[next]] == i {
                sums[order[next]] += running;
                next += 1;
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / paths.len() as f64).collect();
    let slope = if means.iter().all(|&v| v > 0.0) && m_grid.len() >= 2 {
        let lx: Vec<f64> = m_grid.iter().map(|&m| (m as f64).ln()).collect();
        let ly: Vec<f64> = means.iter().map(|v| v.ln()).collect();
        ols(&lx, &ly).0
    } else {
        f64::NAN
    };
    Ok(MaxMomentScaling {
        m: m_grid.to_vec(),
        means,
        slope,
    })
}

/// Largest range of `path` over index windows of length `lag + 1`.
fn sliding_range(path: &[i64], lag: usize) -> i64 {
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut best = 0;
    for (i, &v) in path.iter().enumerate() {
        while maxq.back().is_some_and(|&k| path[k] <= v) {
            maxq.pop_back();
        }
        maxq.push_back(i);
        while minq.back().is_some_and(|&k| path[k] >= v) {
            minq.pop_back();
        }
        minq.push_back(i);
        while maxq[0] + lag < i {
            maxq.pop_front();
        }
        while minq[0] + lag < i {
            minq.pop_front();
        }
        best = best.max(path[maxq[0]] - path[minq[0]]);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusEntry {
    pub delta: f64,
    pub epsilon: f64,
    pub lag: usize,
    pub probability: f64,
}

/// Empirical `P(sup_{|s-t|<delta} lambda^{-1/4} |J(floor(lambda t)) -
/// J(floor(lambda s))| >= epsilon)` over `s, t` in `[0, 1]`. Integer times
/// closer than `delta` differ by at most `ceil(delta lambda)`.
pub fn modulus_diagnostic(
    paths: &[&[i64]],
    lambda: usize,
    deltas: &[f64],
    epsilons: &[f64],
) -> Vec<ModulusEntry> {
    let scale = (lambda as f64).powf(-0.25);
    let mut out = Vec::new();
    for &delta in deltas {
        let lag = ((delta * lambda as f64).ceil() as usize).min(lambda);
        let moduli: Vec<f64> = paths
            .iter()
            .map(|p| scale * sliding_range(&p[..=lambda.min(p.len() - 1)], lag) as f64)
            .collect();
        for &epsilon in epsilons {
            let hits = moduli.iter().filter(|&&m| m >= epsilon).count();
            out.push(ModulusEntry {
                delta,
                epsilon,
                lag,
                probability: hits as f64 / paths.len() as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub lambda: f64,
    pub gaps: Vec<f64>,
    pub median: f64,
    pub q90: f64,
}

/// `sup_t lambda^{-1/4} |X(t) - J(t)/rho|` over the integer times of each
/// replicate.
pub fn tagged_current_gap(
    x_paths: &[&[i64]],
    j_paths: &[&[i64]],
    lambda: f64,
    rho: f64,
) -> Result<GapReport> {
    if x_paths.len() != j_paths.len() || x_paths.is_empty() {
        return Err(Error::Degenerate(
            "gap needs matching, nonempty X and J paths".into(),
        ));
    }
    let scale = lambda.powf(-0.25);
    let gaps: Vec<f64> = x_paths
        .iter()
        .zip(j_paths)
        .map(|(x, j)| {
            x.iter()
                .zip(j.iter())
                .map(|(&xv, &jv)| scale * (xv as f64 - jv as f64 / rho).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(GapReport {
        lambda,
        median: quantile(&gaps, 0.5),
        q90: quantile(&gaps, 0.9),
        gaps,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::lattice::{SeedSpec, StreamTag};
    use crate::stats::fbm::FbmSampler;

    fn fbm_panel(times: &[f64], sigma2: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let s = FbmSampler::new(times, sigma2).unwrap();
        let mut rng = SeedSpec::new(seed).stream(StreamTag::Synthetic, 0);
        (0..n).map(|_| s.sample(&mut rng)).collect()
    }

    #[test]
    fn slope_self_test_on_fbm() {
        let times = [16.0, 32.0, 64.0, 128.0, 256.0];
        let panel = fbm_panel(&times, 0.2, 4000, 1);
        let fit = variance_scaling_panel(&times, &panel, &Bootstrap::default()).unwrap();
        assert!((fit.slope - 0.5).abs() < 3.0 * fit.stderr, "{fit:?}");
    }

    #[test]
    fn bootstrap_se_shrinks_like_root_n() {
        let times = [16.0, 32.0, 64.0, 128.0, 256.0];
        let small = fbm_panel(&times, 0.2, 1000, 2);
        let large = fbm_panel(&times, 0.2, 4000, 3);
        let b = Bootstrap::default();
        let ratio = variance_scaling_panel(&times, &small, &b).unwrap().stderr
            / variance_scaling_panel(&times, &large, &b).unwrap().stderr;
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "{ratio}");
    }

    #[test]
    fn scaling_preconditions() {
        let panel = vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 1.0, 0.0, 9.0]];
        let b = Bootstrap::default();
        assert!(variance_scaling_panel(&[1.0, 2.0, 4.0], &panel, &b).is_err());
        assert!(variance_scaling_panel(&[1.0, 2.0, 3.0, 5.0], &panel, &b).is_err());
        let flat = vec![vec![1.0; 4], vec![1.0; 4]];
        assert!(variance_scaling_panel(&[1.0, 2.0, 4.0, 16.0], &flat, &b).is_err());
    }

    #[test]
    fn covariance_self_test_on_fbm() {
        let grid = [0.25, 0.5, 0.75, 1.0];
        let lambda: f64 = 256.0;
        let sigma2 = 0.2;
        // J(lambda t) = lambda^{1/4} B(t)
        let panel: Vec<Vec<f64>> = fbm_panel(&grid, sigma2, 4000, 4)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * lambda.powf(0.25)).collect())
            .collect();
        let table = covariance_check(&panel, &grid, lambda, sigma2, &Bootstrap::default());
        assert_eq!(table.len(), 10);
        for e in &table {
            assert!(e.holds(), "{e:?}");
        }
        let diag = table.iter().find(|e| e.t == 1.0 && e.s == 1.0).unwrap();
        let var = variance_of(&panel, &(0..4000).collect::<Vec<_>>(), 3) / lambda.sqrt();
        assert_eq!(diag.empirical, var);
    }

    #[test]
    fn max_moment_small_cases() {
        let paths: Vec<Vec<i64>> = vec![vec![0, 1, -3, 2], vec![0, -1, 0, 1]];
        let refs: Vec<&[i64]> = paths.iter().map(|p| p.as_slice()).collect();
        let r = max_moment_scaling(&refs, 6, &[1, 2, 3]).unwrap();
        assert_eq!(r.means[0], 1.0);
        assert_eq!(r.means[1], (729.0 + 1.0) / 2.0);
        assert_eq!(r.means[2], (729.0 + 1.0) / 2.0);
        assert!(max_moment_scaling(&refs, 6, &[4]).is_err());
    }

    #[test]
    fn sliding_range_cases() {
        let p = [0, 3, 1, -2, 4, 4];
        assert_eq!(sliding_range(&p, 5), 6);
        assert_eq!(sliding_range(&p, 1), 6);
        assert_eq!(sliding_range(&p, 0), 0);
        assert_eq!(sliding_range(&[0, 1, 2, 3], 1), 1);
    }

    #[test]
    fn modulus_whole_interval_is_range() {
        let paths: Vec<Vec<i64>> = vec![vec![0, 2, -2, 0, 1], vec![0, 0, 1, 0, 0]];
        let refs: Vec<&[i64]> = paths.iter().map(|p| p.as_slice()).collect();
        let t = modulus_diagnostic(&refs, 4, &[1.0], &[2.0, 4.0 / 4f64.powf(0.25)]);
        // ranges 4 and 1, scaled by 4^{-1/4}
        assert_eq!(t[0].probability, 0.5);
        assert_eq!(t[1].probability, 0.5);
    }

    #[test]
    fn gap_zero_when_frozen() {
        let z = vec![0i64; 17];
        let g = tagged_current_gap(&[&z], &[&z], 16.0, 1.0).unwrap();
        assert_eq!(g.median, 0.0);
    }

    proptest! {
        #[test]
        fn max_moments_nondecreasing(path in prop::collection::vec(-20i64..20, 17)) {
            let r = max_moment_scaling(&[&path], 6, &[1, 2, 4, 8, 16]).unwrap();
            prop_assert!(r.means.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn modulus_monotone_in_delta(path in prop::collection::vec(-20i64..20, 65)) {
            let t = modulus_diagnostic(&[&path], 64, &[1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0], &[1.0]);
            prop_assert!(t.windows(2).all(|w| w[0].probability >= w[1].probability));
        }
    }
}
