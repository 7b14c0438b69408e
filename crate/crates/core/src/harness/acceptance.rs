//! The packaged acceptance suite.
//!
//! Each criterion is evaluated on freshly simulated ensembles derived from
//! the master seed of the spec, so the suite is reproducible end to end.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{
    direct_exclusion, evolve_lagrangian, evolve_lagrangian_from, exclusion_from_stirring,
};
use crate::error::{Error, Result};
use crate::graphical::{
    coupled_window_check, window_halfwidth, EventLog, EventSchedule, StirringTrajectory,
};
use crate::harness::io::{format_rows, rows_of};
use crate::harness::ExperimentSpec;
use crate::lattice::{sample_config, Density, LatticeWindow, SeedSpec, StreamTag};
use crate::observables::{crossing_variables, current, decompose, k_counts, spacings, tagged_path};
use crate::oracle::{
    build_generator, check_negative_correlation, exact_current_distribution,
    uniformized_transition, Model, Pmf,
};
use crate::stats::ensemble::{replicate_start, run_ensemble, EnsembleSummary, Observable};
use crate::stats::hypothesis::{
    chi_square_geometric, ks_lattice, ks_one_sample, ks_two_sample, ks_two_sample_threshold,
};
use crate::stats::scaling::{
    covariance_check, limiting_constants, max_moment_scaling, path_panel, tagged_current_gap,
    variance_scaling,
};
use crate::stats::{Bootstrap, TheoryConstants};

/// Replicates of the trajectory-level identity check.
pub const IDENTITY_REPLICATES: u64 = 1000;
/// Replicates per side of the gap and frame-process comparisons.
pub const COMPARISON_REPLICATES: u64 = 2000;
/// Replicates of the four-site Monte Carlo.
pub const SMALL_MC_REPLICATES: u64 = 100_000;
pub const COUPLED_REPLICATES: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} [{:>2}] {}: {}",
            self.id, self.name, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub criteria: Vec<Criterion>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,name,result,detail\n");
        for c in &self.criteria {
            out.push_str(&format!(
                "{},{},{},\"{}\"\n",
                c.id,
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail.replace('"', "'")
            ));
        }
        out
    }
}

fn criterion(id: u8, name: &'static str, passed: bool, detail: String) -> Criterion {
    Criterion {
        id,
        name,
        passed,
        detail,
    }
}

/// Outcome of the trajectory-level identity checks.
#[derive(Debug, Clone, Default)]
pub struct IdentityTally {
    pub replicates: u64,
    pub checks: u64,
    pub violations: Vec<String>,
    /// Pooled `A_k` at the horizon.
    pub a_values: Vec<i8>,
    /// Pooled spacings `d_i(128)`, `i` in `[-16, 16] \ {0}`.
    pub spacings: Vec<u64>,
}

/// Rebuilds `replicates` replicates of `main` from their event logs
/// through the stirring and the direct exclusion routes and checks every
/// pathwise identity at the grid times, including agreement with the
/// single-pass observables stored in `main`.
pub fn identity_tally(
    spec: &ExperimentSpec,
    main: &EnsembleSummary,
    replicates: u64,
) -> Result<IdentityTally> {
    let rho = Density::new(spec.rho)?;
    let window = LatticeWindow::new(main.half_width);
    let horizon = spec.horizon();
    let master = SeedSpec::new(spec.seed);
    let grid = main.grid.clone();
    let spacing_time = 0.5 * horizon;
    let parts: Vec<Result<IdentityTally>> = (0..replicates.min(main.replicates() as u64))
        .into_par_iter()
        .map(|r| {
            let mut tally = IdentityTally {
                replicates: 1,
                ..Default::default()
            };
            let (config, seed, _) = replicate_start(window, rho, &master, r)?;
            let log = Arc::new(EventLog::generate(window, horizon, &seed));
            let stirring = Arc::new(StirringTrajectory::from_log(Arc::clone(&log)));
            let via_stirring = exclusion_from_stirring(&config, &stirring)?;
            let direct = direct_exclusion(&config, &log)?;
            let cur = current(&direct);
            let dec = decompose(&cur, &direct);
            let tag = tagged_path(&direct)?;
            let record = &main.records[r as usize];
            let mut fail = |what: String, t: f64| {
                tally
                    .violations
                    .push(format!("replicate {r} t={t}: {what}"))
            };
            for (ti, &t) in grid.iter().enumerate() {
                let j = cur.value(t);
                let events = log.count_until(t) as f64;
                let row = &record.rows[ti];
                let kc = k_counts(&stirring, t);
                let cv = crossing_variables(&stirring, &config, t)?;
                let checks = [
                    (
                        j == cur.n_plus(t) as i64 - cur.n_minus(t) as i64,
                        "J = N+ - N-".to_string(),
                    ),
                    (
                        dec.residual(t).abs() <= 1e-9 * events.max(1.0),
                        format!("J - M - A = {:e}", dec.residual(t)),
                    ),
                    (
                        kc.k_plus == kc.k_minus,
                        format!("K+ = {} vs K- = {}", kc.k_plus, kc.k_minus),
                    ),
                    (cv.sum() == j, format!("sum A_k = {} vs J = {j}", cv.sum())),
                    (tag.check_identity(&cur, t).is_ok(), "X = Y_J".to_string()),
                    (
                        via_stirring.at(t) == direct.at(t),
                        "stirring and direct occupancies differ".to_string(),
                    ),
                    (
                        row.j == j && row.x == tag.position(t) as i64 && row.k == kc.k_plus,
                        "single-pass observables differ".to_string(),
                    ),
                    (
                        (row.m - dec.martingale(t)).abs() <= 1e-9 * events.max(1.0)
                            && (row.a - dec.additive(t)).abs() <= 1e-9 * events.max(1.0),
                        "single-pass M, A differ".to_string(),
                    ),
                ];
                for (ok, what) in checks {
                    tally.checks += 1;
                    if !ok {
                        fail(what, t);
                    }
                }
                if ti == grid.len() - 1 {
                    tally.a_values = cv.a();
                }
            }
            let d = spacings(&direct, spacing_time, -16..=16)?;
            tally.spacings = d.into_iter().map(|v| v as u64).collect();
            Ok(tally)
        })
        .collect();
    let mut total = IdentityTally::default();
    for part in parts {
        let p = part?;
        total.replicates += p.replicates;
        total.checks += p.checks;
        total.violations.extend(p.violations);
        total.a_values.extend(p.a_values);
        total.spacings.extend(p.spacings);
    }
    Ok(total)
}

fn proportion_check(values: &[i8], target: i8, p: f64) -> (bool, f64, f64) {
    let n = values.len() as f64;
    let hat = values.iter().filter(|&&v| v == target).count() as f64 / n;
    let se = (hat * (1.0 - hat) / n).sqrt();
    ((hat - p).abs() <= 3.0 * se, hat, se)
}

/// Monte Carlo law of `J(t)` on a segment of `sites` sites.
pub fn small_segment_current(
    sites: usize,
    rho: f64,
    t: f64,
    replicates: u64,
    seed: u64,
) -> Result<Pmf> {
    let window = LatticeWindow::centered_segment(sites);
    let rho = Density::new(rho)?;
    let master = SeedSpec::new(seed).derive(StreamTag::Synthetic, sites as i64);
    let origin = window.index(0);
    let counts = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = master.derive(StreamTag::Replicate, r as i64);
            let mut occ = sample_config(window, rho, &seed).as_slice().to_vec();
            let mut j = 0i64;
            for ring in EventSchedule::new(window, t, &seed) {
                let i = window.index(ring.bond);
                if i == origin {
                    j += occ[i] as i64 - occ[i + 1] as i64;
                }
                occ.swap(i, i + 1);
            }
            j
        })
        .fold(BTreeMap::new, |mut m: BTreeMap<i64, u64>, j| {
            *m.entry(j).or_default() += 1;
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    Ok(Pmf::from_counts(&counts))
}

/// `Z(t)` of the frame process for `replicates` independent frames.
pub fn lagrangian_displacements(
    rho: f64,
    t: f64,
    delta: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let rho = Density::new(rho)?;
    let w = window_halfwidth(t, delta);
    let master = SeedSpec::new(seed).derive(StreamTag::Frame, t.to_bits() as i64);
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let traj =
                evolve_lagrangian(rho, w, t, &master.derive(StreamTag::Replicate, r as i64))?;
            Ok(traj.displacement(t) as f64)
        })
        .collect()
}

/// As [`lagrangian_displacements`], but each frame is the environment seen
/// from the first particle left of `1/2` in a Bernoulli configuration, so
/// its right-hand gap is `Y_1 - Y_0` rather than a single geometric spacing.
pub fn lagrangian_displacements_from_global_start(
    rho: f64,
    t: f64,
    delta: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let density = Density::new(rho)?;
    let w = window_halfwidth(t, delta) as i32;
    let outer = LatticeWindow::new(2 * w as u32);
    let master = SeedSpec::new(seed).derive(StreamTag::Frame, -(t.to_bits() as i64));
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let (config, run_seed, _) = replicate_start(outer, density, &master, r)?;
            let x0 = crate::observables::tagged_start(&config).ok_or(Error::NoTaggedParticle)?;
            let frame: Vec<u8> = (-w..=w)
                .map(|x| {
                    if outer.contains(x0 + x) {
                        config.get(x0 + x)
                    } else {
                        0
                    }
                })
                .collect();
            let traj = evolve_lagrangian_from(frame, density, t, &run_seed)?;
            Ok(traj.displacement(t) as f64)
        })
        .collect()
}

fn with_lambda(spec: &ExperimentSpec, lambda: f64, replicates: u64) -> ExperimentSpec {
    let mut s = spec.clone();
    s.lambda = lambda;
    s.replicates = replicates;
    s.retain_paths = true;
    s
}

fn fmt_ok(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "out"
    }
}

/// Runs all thirteen criteria for `spec` (the desk-scale spec: lambda 256
/// with grid times 16 ... 256).
pub fn run_suite(spec: &ExperimentSpec) -> Result<SuiteReport> {
    spec.validate()?;
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return Err(Error::InvalidDensity(
            spec.rho,
            "the acceptance suite needs 0 < rho < 1",
        ));
    }
    let theory = TheoryConstants::new(spec.rho);
    let boot = Bootstrap::new(200, spec.seed);
    let mut out = Vec::new();

    let main_spec = with_lambda(spec, spec.lambda, spec.replicates);
    let main = run_ensemble(&main_spec)?;
    let last = main.grid.len() - 1;
    let horizon = main.grid[last];

    // 1: identities
    let tally = identity_tally(spec, &main, IDENTITY_REPLICATES)?;
    out.push(criterion(
        1,
        "pathwise identities",
        tally.violations.is_empty(),
        format!(
            "{} violations in {} checks over {} replicates up to t={horizon} (plus {} single-pass replicates checked in-line){}",
            tally.violations.len(),
            tally.checks,
            tally.replicates,
            main.replicates(),
            tally.violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    ));

    // 2: variance scaling
    let fit_j = variance_scaling(&main, Observable::J, &boot)?;
    let fit_k = variance_scaling(&main, Observable::K, &boot)?;
    out.push(criterion(
        2,
        "variance scaling",
        (0.42..=0.58).contains(&fit_j.slope),
        format!(
            "slope ln Var J = {:.4} (bootstrap SE {:.4}), want [0.42, 0.58]; K slope {:.4}",
            fit_j.slope, fit_j.stderr, fit_k.slope
        ),
    ));

    // 3: limiting constants
    let limits = limiting_constants(&main)?;
    let get = |name: &str| limits.iter().find(|e| e.name == name).expect("known entry");
    let (vj, vx, vz, mk) = (get("var_J"), get("var_X"), get("var_Z"), get("mean_K"));
    let ok_j = vj.relative_error().abs() <= 0.10;
    let ok_x = vx.relative_error().abs() <= 0.12;
    let ok_k = mk.relative_error().abs() <= 0.05;
    out.push(criterion(
        3,
        "limiting constants",
        ok_j && ok_x && ok_k,
        format!(
            "Var J/16 = {:.5} vs {:.6} ({:+.1}%, {}); Var X/16 = {:.5} vs {:.6} ({:+.1}%, {}); mean K/16 = {:.5} vs {:.6} ({:+.1}%, {}); Var(X-X0)/16 = {:.5}",
            vj.value,
            vj.theory,
            100.0 * vj.relative_error(),
            fmt_ok(ok_j),
            vx.value,
            vx.theory,
            100.0 * vx.relative_error(),
            fmt_ok(ok_x),
            mk.value,
            mk.theory,
            100.0 * mk.relative_error(),
            fmt_ok(ok_k),
            vz.value
        ),
    ));

    // 4: E K(t) <= sqrt t
    let mut worst = f64::NEG_INFINITY;
    for (ti, &t) in main.grid.iter().enumerate() {
        let k = main.accumulator(Observable::K, ti);
        worst = worst.max(k.mean() - t.sqrt() - 3.0 * k.se_mean());
    }
    out.push(criterion(
        4,
        "crossing bound",
        worst <= 0.0,
        format!("max over grid of mean K - sqrt t - 3 SE = {worst:.4}"),
    ));

    // 5: fBM covariance
    let cov_grid = [0.25, 0.5, 0.75, 1.0];
    let j_paths = main.j_paths().expect("paths retained");
    let panel = path_panel(&j_paths, &cov_grid, spec.lambda)?;
    let table = covariance_check(&panel, &cov_grid, spec.lambda, theory.sigma2_j, &boot);
    let bad: Vec<String> = table
        .iter()
        .filter(|e| !e.holds())
        .map(|e| format!("({}, {}): {:.5} vs {:.5}", e.t, e.s, e.empirical, e.theory))
        .collect();
    let worst_rel = table
        .iter()
        .map(|e| (e.empirical / e.theory - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(criterion(
        5,
        "fBM covariance",
        bad.is_empty(),
        format!(
            "{} of {} ordered pairs within max(15%, 4 SE); worst relative deviation {:.1}%{}",
            table.len() - bad.len(),
            table.len(),
            100.0 * worst_rel,
            if bad.is_empty() {
                String::new()
            } else {
                format!("; failing {}", bad.join(", "))
            }
        ),
    ));

    // 6: normality
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = horizon.powf(0.25);
    let sd_j = theory.sigma2_j.sqrt() * scale;
    let sd_x = theory.sigma2_x.sqrt() * scale;
    let j_last: Vec<i64> = main.records.iter().map(|r| r.rows[last].j).collect();
    let x_last: Vec<i64> = main.records.iter().map(|r| r.rows[last].x).collect();
    let ks_j = ks_lattice(&j_last, |v| std_normal.cdf(v / sd_j));
    let ks_x = ks_lattice(&x_last, |v| std_normal.cdf(v / sd_x));
    let z_last: Vec<i64> = main.records.iter().map(|r| r.rows[last].x - r.x0).collect();
    let ks_z = ks_lattice(&z_last, |v| std_normal.cdf(v / sd_x));
    let raw = |v: &[i64], sd: f64| {
        let z: Vec<f64> = v.iter().map(|&k| k as f64 / sd).collect();
        ks_one_sample(&z, |u| std_normal.cdf(u)).statistic
    };
    out.push(criterion(
        6,
        "normality",
        ks_j.statistic < 0.05 && ks_x.statistic < 0.05,
        format!(
            "continuity-corrected KS D: J {:.4} (p {:.3}), X {:.4} (p {:.3}), want < 0.05; uncorrected D: J {:.4}, X {:.4}; mean X = {:.3}, D of X - X(0) = {:.4}",
            ks_j.statistic,
            ks_j.p_value,
            ks_x.statistic,
            ks_x.p_value,
            raw(&j_last, sd_j),
            raw(&x_last, sd_x),
            x_last.iter().sum::<i64>() as f64 / x_last.len() as f64,
            ks_z.statistic
        ),
    ));

    // 7: crossing variables
    let (ok_p, p_plus, se_plus) = proportion_check(&tally.a_values, 1, 0.25);
    let (ok_m, p_minus, se_minus) = proportion_check(&tally.a_values, -1, 0.25);
    let (ok_z, p_zero, se_zero) = proportion_check(&tally.a_values, 0, 0.5);
    out.push(criterion(
        7,
        "crossing variables",
        ok_p && ok_m && ok_z,
        format!(
            "{} pooled A_k at t={horizon}: P(+1) = {p_plus:.4} (SE {se_plus:.4}), P(-1) = {p_minus:.4} (SE {se_minus:.4}), P(0) = {p_zero:.4} (SE {se_zero:.4})",
            tally.a_values.len()
        ),
    ));

    // 8: oracle exactness
    let two = build_generator(Model::StirringSegment { sites: 2 })?;
    let stay = uniformized_transition(&two, 2f64.ln(), 1e-14)?.entries[0][0];
    let mut negcorr_margin = f64::NEG_INFINITY;
    let mut negcorr_ok = true;
    for t in [0.5, 1.0, 2.0] {
        let rep = check_negative_correlation(4, t, 1e-12)?;
        negcorr_margin = negcorr_margin.max(rep.max_violation);
        negcorr_ok &= rep.holds();
    }
    let exact = exact_current_distribution(4, spec.rho, 1.0)?;
    let mc = small_segment_current(4, spec.rho, 1.0, SMALL_MC_REPLICATES, spec.seed)?;
    let tv = exact.total_variation(&mc);
    out.push(criterion(
        8,
        "oracle exactness",
        (stay - 0.75).abs() < 1e-10 && negcorr_ok && tv < 0.02,
        format!(
            "two-site stay probability {stay:.15}; negative correlation max violation {negcorr_margin:.3e} (tol 1e-12); TV(exact, MC) on 4 sites = {tv:.5}"
        ),
    ));

    // 9: maximal moments
    let m_grid = [16, 32, 64, 128, 256];
    let mm = max_moment_scaling(&j_paths, 6, &m_grid)?;
    out.push(criterion(
        9,
        "maximal-moment scaling",
        mm.slope <= 1.65,
        format!(
            "slope of ln E[max J^6] vs ln m = {:.4}, want <= 1.65; last-octave slope {:.4}; E[max J^6](m) = {}",
            mm.slope,
            (mm.means[mm.means.len() - 1] / mm.means[mm.means.len() - 2]).ln() / 2f64.ln(),
            mm.means.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(", ")
        ),
    ));

    // 10 and 11 share the lambda = 64 ensemble
    let small_lambda = 64.0;
    let small = run_ensemble(&with_lambda(spec, small_lambda, COMPARISON_REPLICATES))?;
    let n_cmp = COMPARISON_REPLICATES as usize;
    let x_big = main.x_paths().expect("paths retained");
    let gap_big = tagged_current_gap(&x_big[..n_cmp], &j_paths[..n_cmp], spec.lambda, spec.rho)?;
    let x_small = small.x_paths().expect("paths retained");
    let j_small = small.j_paths().expect("paths retained");
    let gap_small = tagged_current_gap(&x_small, &j_small, small_lambda, spec.rho)?;
    out.push(criterion(
        10,
        "tagged/current gap",
        gap_big.median < gap_small.median,
        format!(
            "median gap {:.4} at lambda={} vs {:.4} at lambda={small_lambda} (q90 {:.4} vs {:.4})",
            gap_big.median, spec.lambda, gap_small.median, gap_big.q90, gap_small.q90
        ),
    ));

    let t_cmp = small_lambda;
    let ti_small = small
        .time_index(t_cmp)
        .ok_or_else(|| Error::Degenerate("lambda = 64 grid lacks t = 64".into()))?;
    let z_global = small.displacement_column(ti_small);
    let z_frame = lagrangian_displacements(
        spec.rho,
        t_cmp,
        spec.window_delta,
        COMPARISON_REPLICATES,
        spec.seed,
    )?;
    let ks2 = ks_two_sample(&z_frame, &z_global);
    let threshold = ks_two_sample_threshold(z_frame.len(), z_global.len(), 0.01);
    let z_matched = lagrangian_displacements_from_global_start(
        spec.rho,
        t_cmp,
        spec.window_delta,
        COMPARISON_REPLICATES,
        spec.seed,
    )?;
    let ks_matched = ks_two_sample(&z_matched, &z_global);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    out.push(criterion(
        11,
        "Lagrangian cross-check",
        ks2.statistic < threshold,
        format!(
            "two-sample KS D = {:.4} vs threshold {threshold:.4} (alpha 0.01, N = {} each); mean Z(64): frame {:.3}, global {:.3}; frame started from the global tagged environment: D = {:.4}, mean {:.3}",
            ks2.statistic,
            z_frame.len(),
            mean(&z_frame),
            mean(&z_global),
            ks_matched.statistic,
            mean(&z_matched)
        ),
    ));

    // 12: spacings and initial position
    let chi_d = chi_square_geometric(&tally.spacings, spec.rho)?;
    let x0: Vec<u64> = main
        .records
        .iter()
        .map(|r| r.x0.unsigned_abs() + 1)
        .collect();
    let chi_x0 = chi_square_geometric(&x0, spec.rho)?;
    out.push(criterion(
        12,
        "spacings and initial position",
        chi_d.p_value > 1e-3 && chi_x0.p_value > 1e-3,
        format!(
            "pooled d_i({}) chi2 = {:.2} on {} dof, p = {:.4}; |X(0)|+1 chi2 = {:.2} on {} dof, p = {:.4}",
            0.5 * horizon,
            chi_d.statistic,
            chi_d.dof,
            chi_d.p_value,
            chi_x0.statistic,
            chi_x0.dof,
            chi_x0.p_value
        ),
    ));

    // 13: determinism and window coupling
    let first = format_rows(&rows_of(&main));
    let mut again_spec = spec.clone();
    again_spec.retain_paths = false;
    let again = format_rows(&rows_of(&run_ensemble(&again_spec)?));
    let identical = first.as_bytes() == again.as_bytes();
    let mut coupled_spec = spec.clone();
    coupled_spec.lambda = 64.0;
    coupled_spec.t_grid = vec![0.25, 0.5, 1.0];
    coupled_spec.replicates = COUPLED_REPLICATES;
    let coupled = coupled_window_check(&coupled_spec)?;
    out.push(criterion(
        13,
        "determinism",
        identical && coupled.agrees(),
        format!(
            "rows.csv re-run {} ({} bytes); coupled window check W={} vs {} at t=64: {} disagreements over {} replicates",
            if identical { "byte-identical" } else { "differs" },
            first.len(),
            coupled.small_half_width,
            coupled.large_half_width,
            coupled.disagreements.len(),
            coupled.replicates
        ),
    ));

    Ok(SuiteReport { criteria: out })
}
