//! Replicate simulation and ensemble aggregation.
//!
//! A replicate is simulated in a single pass over its ring schedule. The
//! pass keeps the occupancy (exchanged ring by ring), the stirring labels,
//! the tagged particle (moved by the exclusion rule) and the origin-bond
//! counters, and at every grid time cross-checks the pathwise identities
//! between these independent routes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphical::{window_halfwidth, EventSchedule};
use crate::harness::ExperimentSpec;
use crate::lattice::{sample_config, Configuration, Density, LatticeWindow, SeedSpec, StreamTag};
use crate::observables::particle_position_in;
use crate::stats::moments::{tree_merge, MomentAccumulator};

/// Attempts per replicate before giving up on finding a tagged particle.
const MAX_ATTEMPTS: u32 = 64;

/// Observables recorded per grid time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    J,
    X,
    K,
    M,
    A,
}

impl Observable {
    pub const ALL: [Observable; 5] = [
        Observable::J,
        Observable::X,
        Observable::K,
        Observable::M,
        Observable::A,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::J => "J",
            Observable::X => "X",
            Observable::K => "K",
            Observable::M => "M",
            Observable::A => "A",
        }
    }
}

/// Observables of one replicate at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridObservation {
    pub t: f64,
    pub j: i64,
    pub x: i64,
    pub k: u64,
    pub m: f64,
    pub a: f64,
}

impl GridObservation {
    pub fn value(&self, obs: Observable) -> f64 {
        match obs {
            Observable::J => self.j as f64,
            Observable::X => self.x as f64,
            Observable::K => self.k as f64,
            Observable::M => self.m,
            Observable::A => self.a,
        }
    }
}

/// `J` and `X` at the integer times `0, 1, ..., floor(horizon)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerPaths {
    pub j: Vec<i64>,
    pub x: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: u64,
    /// Number of initial configurations rejected for lacking a particle at
    /// a site `<= 0`.
    pub resamples: u32,
    pub x0: i64,
    pub events: u64,
    pub rows: Vec<GridObservation>,
    pub paths: Option<IntegerPaths>,
}

/// Seed of a replicate after `attempt` rejected initial configurations.
pub fn replicate_seed(master: &SeedSpec, replicate: u64, attempt: u32) -> SeedSpec {
    let base = master.derive(StreamTag::Replicate, replicate as i64);
    if attempt == 0 {
        base
    } else {
        base.derive(StreamTag::Resample, attempt as i64)
    }
}

/// Initial configuration and seed of a replicate, resampling until some
/// site `<= 0` is occupied.
pub fn replicate_start(
    window: LatticeWindow,
    rho: Density,
    master: &SeedSpec,
    replicate: u64,
) -> Result<(Configuration, SeedSpec, u32)> {
    for attempt in 0..MAX_ATTEMPTS {
        let seed = replicate_seed(master, replicate, attempt);
        let config = sample_config(window, rho, &seed);
        if particle_position_in(window, config.as_slice(), 0).is_some() {
            return Ok((config, seed, attempt));
        }
    }
    Err(Error::NoTaggedParticle)
}

struct Pass<'a> {
    window: LatticeWindow,
    replicate: u64,
    occ: Vec<u8>,
    eta0: Vec<u8>,
    labels: Vec<i32>,
    tag: i32,
    origin: usize,
    n_plus: i64,
    n_minus: i64,
    a_acc: f64,
    a_last: f64,
    drift: f64,
    events: u64,
    grid: &'a [f64],
    next_grid: usize,
    rows: Vec<GridObservation>,
    last_integer: Option<u64>,
    next_integer: u64,
    paths: Option<IntegerPaths>,
}

impl Pass<'_> {
    fn j(&self) -> i64 {
        self.n_plus - self.n_minus
    }

    fn violation(&self, time: f64, detail: String) -> Error {
        Error::IdentityViolation {
            replicate: self.replicate,
            time,
            detail,
        }
    }

    fn check_tagged(&self, time: f64) -> Result<()> {
        let j = self.j();
        match particle_position_in(self.window, &self.occ, j) {
            Some(y) if y == self.tag => Ok(()),
            y => Err(self.violation(time, format!("X = {} but Y_J = {y:?} (J = {j})", self.tag))),
        }
    }

    /// Records every pending observation time strictly before `until`.
    fn flush(&mut self, until: f64) -> Result<()> {
        if let Some(last) = self.last_integer {
            while self.next_integer <= last && (self.next_integer as f64) < until {
                let t = self.next_integer as f64;
                self.check_tagged(t)?;
                let j = self.j();
                let paths = self.paths.as_mut().expect("paths enabled");
                paths.j.push(j);
                paths.x.push(self.tag as i64);
                self.next_integer += 1;
            }
        }
        while self.next_grid < self.grid.len() && self.grid[self.next_grid] < until {
            let t = self.grid[self.next_grid];
            self.observe_grid(t)?;
            self.next_grid += 1;
        }
        Ok(())
    }

    fn observe_grid(&mut self, t: f64) -> Result<()> {
        let window = self.window;
        let mut k_plus = 0u64;
        let mut k_minus = 0u64;
        let mut crossing_sum = 0i64;
        for (s, (&label, &occ)) in self.labels.iter().zip(&self.occ).enumerate() {
            let x = window.site(s);
            let initial = self.eta0[window.index(label)];
            if occ != initial {
                return Err(self.violation(
                    t,
                    format!("stirring and direct occupancy differ at site {x}"),
                ));
            }
            if label <= 0 && x > 0 {
                k_plus += 1;
                crossing_sum += initial as i64;
            } else if label > 0 && x <= 0 {
                k_minus += 1;
                crossing_sum -= initial as i64;
            }
        }
        let j = self.j();
        if k_plus != k_minus {
            return Err(self.violation(t, format!("K+ = {k_plus} but K- = {k_minus}")));
        }
        if crossing_sum != j {
            return Err(self.violation(t, format!("sum of A_k = {crossing_sum} but J = {j}")));
        }
        self.check_tagged(t)?;
        let a = self.a_acc + 0.5 * self.drift * (t - self.a_last);
        let m = j as f64 - a;
        let residual = j as f64 - m - a;
        if residual.abs() > 1e-9 * (self.events.max(1) as f64) {
            return Err(self.violation(t, format!("J - M - A = {residual:e}")));
        }
        self.rows.push(GridObservation {
            t,
            j,
            x: self.tag as i64,
            k: k_plus,
            m,
            a,
        });
        Ok(())
    }
}

/// Runs one replicate of `spec` on `window`.
///
/// `grid` holds the absolute observation times; integer-time paths are
/// retained when `retain_paths` is set.
pub fn simulate_replicate_on(
    window: LatticeWindow,
    rho: Density,
    horizon: f64,
    grid: &[f64],
    master: &SeedSpec,
    replicate: u64,
    retain_paths: bool,
) -> Result<ReplicateRecord> {
    if !window.has_bond(0) {
        return Err(Error::WindowMismatch(
            "window must contain the bond (0, 1)".into(),
        ));
    }
    let (config, seed, resamples) = replicate_start(window, rho, master, replicate)?;
    let occ = config.as_slice().to_vec();
    let tag = particle_position_in(window, &occ, 0).expect("checked by replicate_start");
    let origin = window.index(0);
    let drift = occ[origin] as f64 - occ[origin + 1] as f64;
    let last_integer = retain_paths.then_some(horizon.floor() as u64);
    let mut pass = Pass {
        window,
        replicate,
        eta0: occ.clone(),
        occ,
        labels: window.sites().collect(),
        tag,
        origin,
        n_plus: 0,
        n_minus: 0,
        a_acc: 0.0,
        a_last: 0.0,
        drift,
        events: 0,
        grid,
        next_grid: 0,
        rows: Vec::with_capacity(grid.len()),
        last_integer,
        next_integer: 0,
        paths: last_integer.map(|n| IntegerPaths {
            j: Vec::with_capacity(n as usize + 1),
            x: Vec::with_capacity(n as usize + 1),
        }),
    };
    for ring in EventSchedule::new(window, horizon, &seed) {
        pass.flush(ring.time)?;
        let b = ring.bond;
        let i = window.index(b);
        if b == pass.tag && pass.occ[i + 1] == 0 {
            pass.tag += 1;
        } else if b + 1 == pass.tag && pass.occ[i] == 0 {
            pass.tag -= 1;
        }
        let near_origin = (-1..=1).contains(&b);
        if near_origin {
            pass.a_acc += 0.5 * pass.drift * (ring.time - pass.a_last);
            pass.a_last = ring.time;
        }
        if b == 0 {
            match (pass.occ[pass.origin], pass.occ[pass.origin + 1]) {
                (1, 0) => pass.n_plus += 1,
                (0, 1) => pass.n_minus += 1,
                _ => {}
            }
        }
        pass.occ.swap(i, i + 1);
        pass.labels.swap(i, i + 1);
        if near_origin {
            pass.drift = pass.occ[pass.origin] as f64 - pass.occ[pass.origin + 1] as f64;
        }
        pass.events += 1;
    }
    pass.flush(f64::INFINITY)?;
    Ok(ReplicateRecord {
        replicate,
        resamples,
        x0: tag as i64,
        events: pass.events,
        rows: pass.rows,
        paths: pass.paths,
    })
}

/// Runs replicate `replicate` of `spec` on `window`.
pub fn simulate_replicate(
    spec: &ExperimentSpec,
    window: LatticeWindow,
    replicate: u64,
    retain_paths: bool,
) -> Result<ReplicateRecord> {
    simulate_replicate_on(
        window,
        Density::new(spec.rho)?,
        spec.horizon(),
        &spec.grid_times(),
        &SeedSpec::new(spec.seed),
        replicate,
        retain_paths,
    )
}

/// Moments per grid time together with the per-replicate records.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub rho: f64,
    pub lambda: f64,
    pub seed: u64,
    pub half_width: u32,
    /// Absolute observation times `lambda * t`.
    pub grid: Vec<f64>,
    /// `moments[time][observable]`.
    pub moments: Vec<[MomentAccumulator; 5]>,
    /// Records ordered by replicate index.
    pub records: Vec<ReplicateRecord>,
}

impl EnsembleSummary {
    /// Aggregates records in replicate-index order, whatever order they
    /// arrive in.
    pub fn from_records(
        spec: &ExperimentSpec,
        half_width: u32,
        mut records: Vec<ReplicateRecord>,
    ) -> Self {
        records.sort_by_key(|r| r.replicate);
        let grid = spec.grid_times();
        let moments = (0..grid.len())
            .map(|ti| {
                let mut per_obs = [MomentAccumulator::new(); 5];
                for obs in Observable::ALL {
                    let singles: Vec<MomentAccumulator> = records
                        .iter()
                        .map(|r| MomentAccumulator::singleton(r.rows[ti].value(obs)))
                        .collect();
                    per_obs[obs.index()] = tree_merge(&singles);
                }
                per_obs
            })
            .collect();
        EnsembleSummary {
            rho: spec.rho,
            lambda: spec.lambda,
            seed: spec.seed,
            half_width,
            grid,
            moments,
            records,
        }
    }

    pub fn replicates(&self) -> usize {
        self.records.len()
    }

    pub fn accumulator(&self, obs: Observable, time_index: usize) -> &MomentAccumulator {
        &self.moments[time_index][obs.index()]
    }

    /// Per-replicate values of `obs` at grid time `time_index`.
    pub fn column(&self, obs: Observable, time_index: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.rows[time_index].value(obs))
            .collect()
    }

    /// Per-replicate displacement `X(t) - X(0)` at grid time `time_index`.
    pub fn displacement_column(&self, time_index: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| (r.rows[time_index].x - r.x0) as f64)
            .collect()
    }

    /// Index of the grid time closest to `t`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.grid
            .iter()
            .position(|&g| (g - t).abs() < 1e-9 * t.abs().max(1.0))
    }

    pub fn resampled(&self) -> usize {
        self.records.iter().filter(|r| r.resamples > 0).count()
    }

    pub fn j_paths(&self) -> Option<Vec<&[i64]>> {
        self.records
            .iter()
            .map(|r| r.paths.as_ref().map(|p| p.j.as_slice()))
            .collect()
    }

    pub fn x_paths(&self) -> Option<Vec<&[i64]>> {
        self.records
            .iter()
            .map(|r| r.paths.as_ref().map(|p| p.x.as_slice()))
            .collect()
    }
}

/// Simulates all replicates of `spec` on the current rayon pool and merges
/// them in replicate order.
pub fn run_ensemble(spec: &ExperimentSpec) -> Result<EnsembleSummary> {
    spec.validate()?;
    let rho = Density::new(spec.rho)?;
    if spec.rho == 0.0 {
        return Err(Error::NoTaggedParticle);
    }
    let half_width = window_halfwidth(spec.horizon(), spec.window_delta);
    let window = LatticeWindow::new(half_width);
    let grid = spec.grid_times();
    let master = SeedSpec::new(spec.seed);
    let horizon = spec.horizon();
    let records = (0..spec.replicates)
        .into_par_iter()
        .map(|r| simulate_replicate_on(window, rho, horizon, &grid, &master, r, spec.retain_paths))
        .collect::<Result<Vec<_>>>()?;
    let resampled = records.iter().filter(|r| r.resamples > 0).count();
    let rate = resampled as f64 / records.len() as f64;
    if rate > 0.01 {
        return Err(Error::ResampleRateExceeded {
            rate,
            resampled,
            replicates: records.len(),
        });
    }
    Ok(EnsembleSummary::from_records(spec, half_width, records))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dynamics::exclusion_from_stirring;
    use crate::graphical::evolve_stirring;
    use crate::observables::{current, decompose, k_counts, tagged_path};

    fn spec(n: u64, lambda: f64) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(0.5, lambda, 17);
        s.replicates = n;
        s.t_grid = vec![0.25, 0.5, 1.0];
        s
    }

    #[test]
    fn single_replicate_counts() {
        let s = spec(1, 16.0);
        let summary = run_ensemble(&s).unwrap();
        for ti in 0..s.t_grid.len() {
            for obs in Observable::ALL {
                assert_eq!(summary.accumulator(obs, ti).count(), 1);
            }
        }
    }

    #[test]
    fn deterministic_summary() {
        let s = spec(40, 16.0);
        assert_eq!(run_ensemble(&s).unwrap(), run_ensemble(&s).unwrap());
    }

    #[test]
    fn completion_order_does_not_matter() {
        use rand::seq::SliceRandom;
        let s = spec(50, 16.0);
        let summary = run_ensemble(&s).unwrap();
        let mut shuffled = summary.records.clone();
        shuffled.shuffle(&mut SeedSpec::new(1).stream(StreamTag::Synthetic, 0));
        let again = EnsembleSummary::from_records(&s, summary.half_width, shuffled);
        assert_eq!(again, summary);
    }

    #[test]
    fn zero_density_is_rejected() {
        let mut s = spec(2, 4.0);
        s.rho = 0.0;
        assert!(matches!(run_ensemble(&s), Err(Error::NoTaggedParticle)));
    }

    #[test]
    fn full_density_freezes_everything() {
        let mut s = spec(5, 16.0);
        s.rho = 1.0;
        s.retain_paths = true;
        let summary = run_ensemble(&s).unwrap();
        for r in &summary.records {
            assert!(r.rows.iter().all(|o| o.j == 0 && o.x == 0 && o.a == 0.0));
            let p = r.paths.as_ref().unwrap();
            assert!(p.j.iter().chain(&p.x).all(|&v| v == 0));
        }
    }

    #[test]
    fn fused_pass_matches_modular_pipeline() {
        let s = spec(25, 32.0);
        let window = LatticeWindow::new(window_halfwidth(s.horizon(), s.window_delta));
        let master = SeedSpec::new(s.seed);
        for r in 0..s.replicates {
            let rec = simulate_replicate(&s, window, r, true).unwrap();
            let (config, seed, _) =
                replicate_start(window, Density::new(0.5).unwrap(), &master, r).unwrap();
            let stirring = Arc::new(evolve_stirring(window, s.horizon(), &seed));
            let occ = exclusion_from_stirring(&config, &stirring).unwrap();
            let c = current(&occ);
            let d = decompose(&c, &occ);
            let tagged = tagged_path(&occ).unwrap();
            assert_eq!(rec.events as usize, stirring.log().len());
            for row in &rec.rows {
                assert_eq!(row.j, c.value(row.t));
                assert_eq!(row.x, tagged.position(row.t) as i64);
                assert_eq!(row.k, k_counts(&stirring, row.t).k_plus);
                assert!((row.a - d.additive(row.t)).abs() < 1e-9);
            }
            let paths = rec.paths.unwrap();
            assert_eq!(paths.j.len(), 33);
            for (i, (&j, &x)) in paths.j.iter().zip(&paths.x).enumerate() {
                assert_eq!(j, c.value(i as f64));
                assert_eq!(x, tagged.position(i as f64) as i64);
            }
        }
    }

    #[test]
    fn current_mean_is_zero_at_half_density() {
        let mut s = spec(4000, 64.0);
        s.t_grid = vec![1.0];
        let summary = run_ensemble(&s).unwrap();
        let acc = summary.accumulator(Observable::J, 0);
        assert!(
            acc.mean().abs() < 3.0 * acc.se_mean(),
            "{} +- {}",
            acc.mean(),
            acc.se_mean()
        );
    }
}
