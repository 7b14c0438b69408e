//! Harris stirring construction on a finite window.
//!
//! Every bond `(x, x+1)` carries a rate-1/2 Poisson clock whose gaps come
//! from the bond's own derived stream. A ring transposes whatever sits at
//! `x` and `x + 1`. Rings are produced lazily by a priority queue keyed by
//! `(time, bond)`, which also fixes the tie-break (smaller bond first).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{Read, Write};
use std::sync::Arc;

use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::harness::ExperimentSpec;
use crate::lattice::{LatticeWindow, SeedSpec, Stream, StreamTag};

/// Rate of each bond clock.
pub const BOND_RATE: f64 = 0.5;

/// One ring of the clock attached to bond `(bond, bond + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockRing {
    pub time: f64,
    pub bond: i32,
}

impl Eq for ClockRing {}

impl Ord for ClockRing {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.bond.cmp(&other.bond))
    }
}

impl PartialOrd for ClockRing {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Smallest half width `W` such that influence is unlikely to travel `W`
/// sites before `t_max`, plus a safety margin of `ceil(6 sqrt(t_max+1)) + 10`.
///
/// The search starts at `ceil(t_max)`: below that point the Chernoff
/// expression is not a tail bound.
pub fn window_halfwidth(t_max: f64, delta: f64) -> u32 {
    assert!(t_max >= 0.0 && delta > 0.0 && delta < 1.0);
    let margin = (6.0 * (t_max + 1.0).sqrt()).ceil() as u32 + 10;
    if t_max == 0.0 {
        return margin;
    }
    let mut w = t_max.ceil().max(1.0);
    while chernoff_bound(w, t_max) >= delta {
        w += 1.0;
    }
    w as u32 + margin
}

/// `2 exp(W - t - W ln(W / t))`.
pub fn chernoff_bound(w: f64, t: f64) -> f64 {
    2.0 * (w - t - w * (w / t).ln()).exp()
}

#[inline]
fn exp_gap(rng: &mut Stream) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / BOND_RATE
}

/// The stream that drives the clock of `bond`.
pub fn bond_stream(seed: &SeedSpec, bond: i32) -> Stream {
    seed.stream(StreamTag::Bond, bond as i64)
}

/// Time of the `k`-th ring (k >= 1) of the clock on `bond`.
pub fn next_ring(bond: i32, k: u64, seed: &SeedSpec) -> f64 {
    assert!(k >= 1, "ring ordinals start at 1");
    let mut rng = bond_stream(seed, bond);
    (0..k).map(|_| exp_gap(&mut rng)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    slot: u32,
    bond: i32,
}

impl Eq for Pending {}

impl Ord for Pending {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.bond.cmp(&self.bond))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy time-ordered stream of rings for every bond of a window up to a
/// horizon.
pub struct EventSchedule {
    horizon: f64,
    streams: Vec<Stream>,
    heap: BinaryHeap<Pending>,
}

impl EventSchedule {
    pub fn new(window: LatticeWindow, horizon: f64, seed: &SeedSpec) -> Self {
        let mut streams = Vec::with_capacity(window.bond_count());
        let mut heap = BinaryHeap::with_capacity(window.bond_count());
        for (slot, bond) in window.bonds().enumerate() {
            let mut rng = bond_stream(seed, bond);
            let time = exp_gap(&mut rng);
            if time <= horizon {
                heap.push(Pending {
                    time,
                    slot: slot as u32,
                    bond,
                });
            }
            streams.push(rng);
        }
        EventSchedule {
            horizon,
            streams,
            heap,
        }
    }
}

impl Iterator for EventSchedule {
    type Item = ClockRing;

    fn next(&mut self) -> Option<ClockRing> {
        let mut top = self.heap.peek_mut()?;
        let ring = ClockRing {
            time: top.time,
            bond: top.bond,
        };
        let next = ring.time + exp_gap(&mut self.streams[top.slot as usize]);
        if next <= self.horizon {
            top.time = next;
        } else {
            std::collections::binary_heap::PeekMut::pop(top);
        }
        Some(ring)
    }
}

/// Time-ordered rings of a window up to a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    window: LatticeWindow,
    horizon: f64,
    rings: Vec<ClockRing>,
}

impl EventLog {
    pub fn generate(window: LatticeWindow, horizon: f64, seed: &SeedSpec) -> Self {
        let rings = EventSchedule::new(window, horizon, seed).collect();
        EventLog {
            window,
            horizon,
            rings,
        }
    }

    /// Builds a log from explicit rings; they are sorted by `(time, bond)`.
    pub fn from_rings(
        window: LatticeWindow,
        horizon: f64,
        mut rings: Vec<ClockRing>,
    ) -> Result<Self> {
        for r in &rings {
            window.check_bond(r.bond)?;
        }
        rings.sort();
        Ok(EventLog {
            window,
            horizon,
            rings,
        })
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn rings(&self) -> &[ClockRing] {
        &self.rings
    }

    pub fn len(&self) -> usize {
        self.rings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    /// Number of rings with time `<= t`.
    pub fn count_until(&self, t: f64) -> usize {
        self.rings.partition_point(|r| r.time <= t)
    }

    /// Little-endian dump: ring count as `u64`, then `(f64 time, i32 bond)`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(&(self.rings.len() as u64).to_le_bytes())?;
        for r in &self.rings {
            out.write_all(&r.time.to_le_bytes())?;
            out.write_all(&r.bond.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`EventLog::write_binary`].
    pub fn read_binary<R: Read>(window: LatticeWindow, horizon: f64, mut input: R) -> Result<Self> {
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut rings = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut b8)?;
            input.read_exact(&mut b4)?;
            rings.push(ClockRing {
                time: f64::from_le_bytes(b8),
                bond: i32::from_le_bytes(b4),
            });
        }
        EventLog::from_rings(window, horizon, rings)
    }
}

/// Permutation-valued stirring process with point queries.
///
/// Stores the event log plus a site-to-label snapshot every
/// `ceil(sqrt(E))` rings; a query replays from the nearest snapshot.
#[derive(Debug, Clone)]
pub struct StirringTrajectory {
    log: Arc<EventLog>,
    stride: usize,
    // snapshot j holds the site -> label map after j * stride rings
    snapshots: Vec<Vec<i32>>,
}

/// Site-to-label map of the identity permutation.
fn identity_labels(window: LatticeWindow) -> Vec<i32> {
    window.sites().collect()
}

impl StirringTrajectory {
    pub fn from_log(log: Arc<EventLog>) -> Self {
        let window = log.window();
        let stride = ((log.len() as f64).sqrt().ceil() as usize).max(1);
        let mut labels = identity_labels(window);
        let mut snapshots = vec![labels.clone()];
        for (n, ring) in log.rings().iter().enumerate() {
            let i = window.index(ring.bond);
            labels.swap(i, i + 1);
            if (n + 1) % stride == 0 {
                snapshots.push(labels.clone());
            }
        }
        StirringTrajectory {
            log,
            stride,
            snapshots,
        }
    }

    pub fn window(&self) -> LatticeWindow {
        self.log.window()
    }

    pub fn horizon(&self) -> f64 {
        self.log.horizon()
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    /// Site -> label map (the label is the label's starting site).
    pub fn inverse_at(&self, t: f64) -> Vec<i32> {
        let window = self.window();
        let count = self.log.count_until(t);
        let snap = (count / self.stride).min(self.snapshots.len() - 1);
        let mut labels = self.snapshots[snap].clone();
        for ring in &self.log.rings()[snap * self.stride..count] {
            let i = window.index(ring.bond);
            labels.swap(i, i + 1);
        }
        labels
    }

    /// Label -> site map: entry `window.index(i)` holds `xi_t^i`.
    pub fn forward_at(&self, t: f64) -> Vec<i32> {
        let window = self.window();
        let inverse = self.inverse_at(t);
        let mut forward = vec![0; inverse.len()];
        for (site_idx, &label) in inverse.iter().enumerate() {
            forward[window.index(label)] = window.site(site_idx);
        }
        forward
    }

    /// `xi_t^label`.
    pub fn position(&self, label: i32, t: f64) -> i32 {
        let window = self.window();
        let count = self.log.count_until(t);
        let snap = (count / self.stride).min(self.snapshots.len() - 1);
        let snapshot = &self.snapshots[snap];
        let mut pos = window.site(
            snapshot
                .iter()
                .position(|&l| l == label)
                .expect("label present in every snapshot"),
        );
        for ring in &self.log.rings()[snap * self.stride..count] {
            if ring.bond == pos {
                pos += 1;
            } else if ring.bond + 1 == pos {
                pos -= 1;
            }
        }
        pos
    }
}

/// Generates the event log of `window` up to `horizon` and builds the
/// stirring trajectory on it.
pub fn evolve_stirring(window: LatticeWindow, horizon: f64, seed: &SeedSpec) -> StirringTrajectory {
    assert!(horizon >= 0.0);
    StirringTrajectory::from_log(Arc::new(EventLog::generate(window, horizon, seed)))
}

/// One disagreement found by [`coupled_window_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDisagreement {
    pub replicate: u64,
    pub time: f64,
    pub observable: &'static str,
    pub small: f64,
    pub large: f64,
}

/// Outcome of running the observable pipeline at `W` and `2W`.
#[derive(Debug, Clone)]
pub struct CoupledWindowReport {
    pub small_half_width: u32,
    pub large_half_width: u32,
    pub replicates: u64,
    pub disagreements: Vec<WindowDisagreement>,
}

impl CoupledWindowReport {
    pub fn agrees(&self) -> bool {
        self.disagreements.is_empty()
    }

    /// Number of replicates with at least one disagreement.
    pub fn disagreeing_replicates(&self) -> usize {
        let mut ids: Vec<u64> = self.disagreements.iter().map(|d| d.replicate).collect();
        ids.dedup();
        ids.len()
    }
}

/// Runs the observable pipeline at the sized window and at twice its half
/// width with the same master seed and compares `J`, `X`, `K` on the grid.
pub fn coupled_window_check(spec: &ExperimentSpec) -> Result<CoupledWindowReport> {
    let w = window_halfwidth(spec.horizon(), spec.window_delta);
    coupled_window_check_at(spec, w)
}

/// As [`coupled_window_check`] with an explicit small half width; a
/// deliberately undersized window serves as a negative control.
pub fn coupled_window_check_at(
    spec: &ExperimentSpec,
    half_width: u32,
) -> Result<CoupledWindowReport> {
    use crate::stats::ensemble::simulate_replicate;
    let small = LatticeWindow::new(half_width);
    let large = LatticeWindow::new(2 * half_width);
    let mut disagreements = Vec::new();
    for r in 0..spec.replicates {
        let a = simulate_replicate(spec, small, r, false)?;
        let b = simulate_replicate(spec, large, r, false)?;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (name, va, vb) in [
                ("J", ra.j as f64, rb.j as f64),
                ("X", ra.x as f64, rb.x as f64),
                ("K", ra.k as f64, rb.k as f64),
            ] {
                if va != vb {
                    disagreements.push(WindowDisagreement {
                        replicate: r,
                        time: ra.t,
                        observable: name,
                        small: va,
                        large: vb,
                    });
                }
            }
        }
    }
    Ok(CoupledWindowReport {
        small_half_width: half_width,
        large_half_width: 2 * half_width,
        replicates: spec.replicates,
        disagreements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfwidth_at_zero_is_margin() {
        assert_eq!(window_halfwidth(0.0, 1e-9), 16);
    }

    #[test]
    fn halfwidth_is_monotone_in_time() {
        let mut prev = 0;
        for t in [0.0, 0.5, 1.0, 4.0, 16.0, 64.0, 100.0, 256.0, 1000.0] {
            let w = window_halfwidth(t, 1e-9);
            assert!(w >= prev, "t={t}: {w} < {prev}");
            prev = w;
        }
    }

    #[test]
    fn halfwidth_satisfies_bound_at_256() {
        let t = 256.0;
        let w = window_halfwidth(t, 1e-9);
        let margin = (6.0 * (t + 1.0f64).sqrt()).ceil() as u32 + 10;
        let base = (w - margin) as f64;
        assert!(chernoff_bound(base, t) < 1e-9);
        assert!(chernoff_bound(base - 1.0, t) >= 1e-9, "not the smallest");
    }

    #[test]
    fn ring_times_are_deterministic() {
        let seed = SeedSpec::new(5);
        assert_eq!(next_ring(3, 7, &seed), next_ring(3, 7, &seed));
        assert!(next_ring(3, 8, &seed) > next_ring(3, 7, &seed));
    }

    #[test]
    fn gap_mean_is_two() {
        let mut rng = bond_stream(&SeedSpec::new(8), 0);
        let n = 100_000;
        let mean = (0..n).map(|_| exp_gap(&mut rng)).sum::<f64>() / n as f64;
        // exponential(1/2): mean 2, sd 2
        assert!(
            (mean - 2.0).abs() < 3.0 * 2.0 / (n as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn ring_counts_over_bonds_are_poisson_mean() {
        let window = LatticeWindow::with_bounds(-5000, 5000);
        let log = EventLog::generate(window, 100.0, &SeedSpec::new(21));
        let bonds = window.bond_count() as f64;
        let mean = log.len() as f64 / bonds;
        // Poisson(50): sd of the mean sqrt(50 / bonds)
        assert!(
            (mean - 50.0).abs() < 3.0 * (50.0 / bonds).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn per_bond_count_over_replicates() {
        let window = LatticeWindow::new(3);
        let reps = 2000;
        let t = 10.0;
        let counts: Vec<f64> = (0..reps)
            .map(|r| {
                let seed = SeedSpec::new(77).derive(StreamTag::Replicate, r);
                EventLog::generate(window, t, &seed)
                    .rings()
                    .iter()
                    .filter(|ring| ring.bond == 0)
                    .count() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        assert!((mean - t / 2.0).abs() < 3.0 * (t / 2.0 / reps as f64).sqrt());
    }

    #[test]
    fn log_is_sorted_and_window_independent() {
        let seed = SeedSpec::new(9);
        let small = EventLog::generate(LatticeWindow::new(10), 20.0, &seed);
        let large = EventLog::generate(LatticeWindow::new(30), 20.0, &seed);
        assert!(small.rings().windows(2).all(|p| p[0] < p[1]));
        let shared: Vec<_> = large
            .rings()
            .iter()
            .filter(|r| r.bond >= -10 && r.bond < 10)
            .copied()
            .collect();
        assert_eq!(shared, small.rings());
        // the lazy schedule reproduces next_ring
        let first_on_2: Vec<f64> = small
            .rings()
            .iter()
            .filter(|r| r.bond == 2)
            .map(|r| r.time)
            .take(3)
            .collect();
        for (k, t) in first_on_2.iter().enumerate() {
            assert_eq!(*t, next_ring(2, k as u64 + 1, &seed));
        }
    }

    #[test]
    fn ties_break_by_bond() {
        let w = LatticeWindow::new(3);
        let log = EventLog::from_rings(
            w,
            5.0,
            vec![
                ClockRing { time: 1.0, bond: 2 },
                ClockRing {
                    time: 1.0,
                    bond: -1,
                },
                ClockRing { time: 0.5, bond: 0 },
            ],
        )
        .unwrap();
        let bonds: Vec<i32> = log.rings().iter().map(|r| r.bond).collect();
        assert_eq!(bonds, vec![0, -1, 2]);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let traj = evolve_stirring(LatticeWindow::new(8), 0.0, &SeedSpec::new(1));
        assert!(traj.log().is_empty());
        let fwd = traj.forward_at(0.0);
        assert_eq!(fwd, LatticeWindow::new(8).sites().collect::<Vec<_>>());
    }

    #[test]
    fn forward_is_bijection_and_inverse_consistent() {
        use rand::Rng;
        let window = LatticeWindow::new(25);
        let traj = evolve_stirring(window, 30.0, &SeedSpec::new(4));
        let mut rng = SeedSpec::new(4).stream(StreamTag::Synthetic, 0);
        for _ in 0..100 {
            let t = rng.random::<f64>() * 30.0;
            let fwd = traj.forward_at(t);
            let inv = traj.inverse_at(t);
            let mut sorted = fwd.clone();
            sorted.sort();
            assert_eq!(sorted, window.sites().collect::<Vec<_>>());
            for label in window.sites() {
                let pos = fwd[window.index(label)];
                assert_eq!(inv[window.index(pos)], label);
                assert_eq!(traj.position(label, t), pos);
            }
        }
    }

    #[test]
    fn each_ring_swaps_two_adjacent_entries() {
        let window = LatticeWindow::new(6);
        let traj = evolve_stirring(window, 10.0, &SeedSpec::new(12));
        let mut prev = traj.inverse_at(0.0);
        for ring in traj.log().rings() {
            let cur = traj.inverse_at(ring.time);
            let diff: Vec<usize> = (0..cur.len()).filter(|&i| cur[i] != prev[i]).collect();
            let i = window.index(ring.bond);
            assert_eq!(diff, vec![i, i + 1]);
            assert_eq!(cur[i], prev[i + 1]);
            prev = cur;
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let window = LatticeWindow::new(12);
        let traj = evolve_stirring(window, 15.0, &SeedSpec::new(31));
        let mut buf = Vec::new();
        traj.log().write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 12 * traj.log().len());
        let back = EventLog::read_binary(window, 15.0, buf.as_slice()).unwrap();
        assert_eq!(&back, traj.log().as_ref());
        let replay = StirringTrajectory::from_log(Arc::new(back));
        for t in [0.0, 3.3, 7.0, 15.0] {
            assert_eq!(replay.forward_at(t), traj.forward_at(t));
        }
    }

    #[test]
    fn tagged_label_variance_matches_walker() {
        // a single stirring label performs a rate-1 symmetric walk: Var = t
        let t = 16.0;
        let window = LatticeWindow::new(window_halfwidth(t, 1e-9));
        let reps = 4000;
        let xs: Vec<f64> = (0..reps)
            .map(|r| {
                let seed = SeedSpec::new(100).derive(StreamTag::Replicate, r);
                let mut pos = 0i32;
                for ring in EventSchedule::new(window, t, &seed) {
                    if ring.bond == pos {
                        pos += 1;
                    } else if ring.bond + 1 == pos {
                        pos -= 1;
                    }
                }
                pos as f64
            })
            .collect();
        let n = reps as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).sqrt();
        assert!((var - t).abs() < 3.0 * se, "var {var} se {se}");
    }
}
