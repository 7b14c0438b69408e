//! Pathwise observables: current across the bond `(0, 1)`, its martingale
//! decomposition, stirring crossing counts and crossing variables, the
//! tagged particle and the labelled particle positions.

use std::ops::RangeInclusive;

use crate::dynamics::OccupancyTrajectory;
use crate::error::{Error, Result};
use crate::graphical::StirringTrajectory;
use crate::lattice::{Configuration, LatticeWindow};

/// Signed jumps of the current `J` across `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentPath {
    /// `(time, +1)` for a `0 -> 1` crossing, `(time, -1)` for `1 -> 0`.
    jumps: Vec<(f64, i8)>,
    horizon: f64,
}

impl CurrentPath {
    pub fn jumps(&self) -> &[(f64, i8)] {
        &self.jumps
    }

    fn upto(&self, t: f64) -> &[(f64, i8)] {
        &self.jumps[..self.jumps.partition_point(|j| j.0 <= t)]
    }

    pub fn n_plus(&self, t: f64) -> u64 {
        self.upto(t).iter().filter(|j| j.1 > 0).count() as u64
    }

    pub fn n_minus(&self, t: f64) -> u64 {
        self.upto(t).iter().filter(|j| j.1 < 0).count() as u64
    }

    /// `J(t)`.
    pub fn value(&self, t: f64) -> i64 {
        self.upto(t).iter().map(|j| j.1 as i64).sum()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Counts particle crossings of `(0, 1)`: a ring on that bond is a `0 -> 1`
/// crossing when `eta(0) = 1, eta(1) = 0` just before it, and a `1 -> 0`
/// crossing in the mirror case.
pub fn current(traj: &OccupancyTrajectory) -> CurrentPath {
    let mut config = traj.initial().clone();
    let window = config.window();
    let mut jumps = Vec::new();
    if window.has_bond(0) {
        for ring in traj.log().rings() {
            if ring.bond == 0 {
                match (config.get(0), config.get(1)) {
                    (1, 0) => jumps.push((ring.time, 1)),
                    (0, 1) => jumps.push((ring.time, -1)),
                    _ => {}
                }
            }
            config
                .exchange_in_place(ring.bond)
                .expect("ring inside window");
        }
    }
    CurrentPath {
        jumps,
        horizon: traj.horizon(),
    }
}

/// `J = M + A` with `A(t) = (1/2) int_0^t (eta_s(0) - eta_s(1)) ds`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    current: CurrentPath,
    // (start time, A at start, integrand eta(0) - eta(1) on the piece)
    pieces: Vec<(f64, f64, i8)>,
}

impl Decomposition {
    /// `A(t)`, summed exactly over the piecewise-constant integrand.
    pub fn additive(&self, t: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.0 <= t).max(1) - 1;
        let (start, a, g) = self.pieces[k];
        a + 0.5 * g as f64 * (t - start)
    }

    /// `M(t) = J(t) - A(t)`.
    pub fn martingale(&self, t: f64) -> f64 {
        self.current.value(t) as f64 - self.additive(t)
    }

    /// `J(t) - M(t) - A(t)`, zero up to float addition error.
    pub fn residual(&self, t: f64) -> f64 {
        self.current.value(t) as f64 - self.martingale(t) - self.additive(t)
    }

    pub fn current(&self) -> &CurrentPath {
        &self.current
    }
}

pub fn decompose(current_path: &CurrentPath, traj: &OccupancyTrajectory) -> Decomposition {
    let history = traj.site_history(&[0, 1]);
    let mut pieces = Vec::with_capacity(history.len());
    let mut a = 0.0;
    let mut prev: Option<(f64, i8)> = None;
    for (time, values) in history {
        let g = values[0] as i8 - values[1] as i8;
        if let Some((start, pg)) = prev {
            a += 0.5 * pg as f64 * (time - start);
        }
        pieces.push((time, a, g));
        prev = Some((time, g));
    }
    Decomposition {
        current: current_path.clone(),
        pieces,
    }
}

/// `K^+(t)` and `K^-(t)` read off the forward stirring map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossingCounts {
    pub k_plus: u64,
    pub k_minus: u64,
}

pub fn k_counts(stirring: &StirringTrajectory, t: f64) -> CrossingCounts {
    let window = stirring.window();
    let forward = stirring.forward_at(t);
    let mut k_plus = 0;
    let mut k_minus = 0;
    for (idx, &pos) in forward.iter().enumerate() {
        let label = window.site(idx);
        if label <= 0 && pos > 0 {
            k_plus += 1;
        } else if label > 0 && pos <= 0 {
            k_minus += 1;
        }
    }
    CrossingCounts { k_plus, k_minus }
}

/// Labels that crossed `1/2` by time `t`, with their initial occupancies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossingVariables {
    /// `i_1 < ... < i_K <= 0`, labels now to the right of `1/2`.
    pub left_origins: Vec<i32>,
    /// `0 < j_1 < ... < j_K`, labels now to the left of `1/2`.
    pub right_origins: Vec<i32>,
    pub b_plus: Vec<u8>,
    pub b_minus: Vec<u8>,
}

impl CrossingVariables {
    /// `K(t)`; panics if the two sides disagree, use [`Self::counts`] to inspect.
    pub fn k(&self) -> usize {
        assert_eq!(self.left_origins.len(), self.right_origins.len());
        self.left_origins.len()
    }

    pub fn counts(&self) -> CrossingCounts {
        CrossingCounts {
            k_plus: self.left_origins.len() as u64,
            k_minus: self.right_origins.len() as u64,
        }
    }

    /// `A_k = B_k^+ - B_k^-`.
    pub fn a(&self) -> Vec<i8> {
        self.b_plus
            .iter()
            .zip(&self.b_minus)
            .map(|(&p, &m)| p as i8 - m as i8)
            .collect()
    }

    /// `sum_{k <= K} A_k`, zero when `K = 0`.
    pub fn sum(&self) -> i64 {
        let plus: i64 = self.b_plus.iter().map(|&b| b as i64).sum();
        let minus: i64 = self.b_minus.iter().map(|&b| b as i64).sum();
        plus - minus
    }
}

pub fn crossing_variables(
    stirring: &StirringTrajectory,
    config0: &Configuration,
    t: f64,
) -> Result<CrossingVariables> {
    let window = stirring.window();
    if config0.window() != window {
        return Err(Error::WindowMismatch("configuration vs stirring".into()));
    }
    let forward = stirring.forward_at(t);
    let mut left_origins = Vec::new();
    let mut right_origins = Vec::new();
    // labels visited in increasing order, so both lists come out sorted
    for (idx, &pos) in forward.iter().enumerate() {
        let label = window.site(idx);
        if label <= 0 && pos > 0 {
            left_origins.push(label);
        } else if label > 0 && pos <= 0 {
            right_origins.push(label);
        }
    }
    let b_plus = left_origins.iter().map(|&i| config0.get(i)).collect();
    let b_minus = right_origins.iter().map(|&j| config0.get(j)).collect();
    Ok(CrossingVariables {
        left_origins,
        right_origins,
        b_plus,
        b_minus,
    })
}

/// `Y_n` of a configuration: for `n >= 1` the `n`-th particle to the right
/// of `1/2`, for `n <= 0` the `(|n|+1)`-th particle to the left of it.
pub fn particle_position(config: &Configuration, n: i64) -> Option<i32> {
    particle_position_in(config.window(), config.as_slice(), n)
}

/// [`particle_position`] on a raw occupancy slice of `window`.
pub fn particle_position_in(window: LatticeWindow, occupancy: &[u8], n: i64) -> Option<i32> {
    if n >= 1 {
        let mut seen = 0;
        for x in 1.max(window.left())..=window.right() {
            if occupancy[window.index(x)] == 1 {
                seen += 1;
                if seen == n {
                    return Some(x);
                }
            }
        }
    } else {
        let mut seen = 0;
        let mut x = 0.min(window.right());
        while x >= window.left() {
            if occupancy[window.index(x)] == 1 {
                if seen == -n {
                    return Some(x);
                }
                seen += 1;
            }
            x -= 1;
        }
    }
    None
}

/// Largest occupied site `<= 0`.
pub fn tagged_start(config: &Configuration) -> Option<i32> {
    particle_position(config, 0)
}

/// Trajectory of the tagged particle.
///
/// The particle is followed by the exclusion rule (a ring on a bond it
/// occupies moves it only when the other end is empty), independently of
/// the order-statistic positions `Y_n(t)` read from the occupancy
/// trajectory.
#[derive(Debug, Clone)]
pub struct TaggedPath<'a> {
    occupancy: &'a OccupancyTrajectory,
    start: i32,
    moves: Vec<(f64, i32)>,
}

impl TaggedPath<'_> {
    /// `X(t)`.
    pub fn position(&self, t: f64) -> i32 {
        let k = self.moves.partition_point(|m| m.0 <= t);
        if k == 0 {
            self.start
        } else {
            self.moves[k - 1].1
        }
    }

    /// `X(t) - X(0)`.
    pub fn displacement(&self, t: f64) -> i32 {
        self.position(t) - self.start
    }

    /// `Y_n(t)`.
    pub fn label_position(&self, n: i64, t: f64) -> Option<i32> {
        particle_position(&self.occupancy.at(t), n)
    }

    /// Checks `X(t) = Y_{J(t)}(t)`.
    pub fn check_identity(&self, current: &CurrentPath, t: f64) -> Result<()> {
        let j = current.value(t);
        let x = self.position(t);
        match self.label_position(j, t) {
            Some(y) if y == x => Ok(()),
            other => Err(Error::IdentityViolation {
                replicate: 0,
                time: t,
                detail: format!("X = {x} but Y_J = {other:?} with J = {j}"),
            }),
        }
    }
}

pub fn tagged_path(traj: &OccupancyTrajectory) -> Result<TaggedPath<'_>> {
    let start = tagged_start(traj.initial()).ok_or(Error::NoTaggedParticle)?;
    let mut config = traj.initial().clone();
    let mut pos = start;
    let mut moves = Vec::new();
    for ring in traj.log().rings() {
        if ring.bond == pos && config.get(pos + 1) == 0 {
            pos += 1;
            moves.push((ring.time, pos));
        } else if ring.bond + 1 == pos && config.get(ring.bond) == 0 {
            pos -= 1;
            moves.push((ring.time, pos));
        }
        config.exchange_in_place(ring.bond)?;
    }
    Ok(TaggedPath {
        occupancy: traj,
        start,
        moves,
    })
}

/// Spacings `d_i(t) = Y_{i+1}(t) - Y_i(t)` for `i` in `range`, skipping
/// `i = 0`.
pub fn spacings(
    traj: &OccupancyTrajectory,
    t: f64,
    range: RangeInclusive<i64>,
) -> Result<Vec<i32>> {
    spacings_of(&traj.at(t), range)
}

pub fn spacings_of(config: &Configuration, range: RangeInclusive<i64>) -> Result<Vec<i32>> {
    let mut out = Vec::new();
    for i in range {
        if i == 0 {
            continue;
        }
        let lo = particle_position(config, i).ok_or(Error::RangeExceeded { index: i })?;
        let hi = particle_position(config, i + 1).ok_or(Error::RangeExceeded { index: i + 1 })?;
        out.push(hi - lo);
    }
    Ok(out)
}
