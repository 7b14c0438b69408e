//! Exact continuous-time Markov chain computations on small state spaces.
//!
//! Transition matrices come from uniformization,
//! `P(t) = sum_k e^{-L t} (L t)^k / k! S^k` with `S = I + Q / L`, truncated
//! once a certified bound on the Poisson tail drops below the tolerance.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::lattice::LatticeWindow;

/// Largest state space accepted by [`build_generator`].
pub const STATE_LIMIT: usize = 100_000;

const TERM_CAP: usize = 1_000_000;

/// Finite models whose generators can be materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Exclusion on a ring of `sites` sites with a fixed particle count.
    ExclusionRing { sites: usize, particles: usize },
    /// Exclusion on a closed segment; `particles = None` keeps all `2^n`
    /// configurations.
    ExclusionSegment {
        sites: usize,
        particles: Option<usize>,
    },
    /// Stirring permutations of a closed segment of `sites` sites.
    StirringSegment { sites: usize },
    /// Rate-1 symmetric walk on `-half_width..=half_width`, jumps off the
    /// ends suppressed.
    SingleWalker { half_width: usize },
}

/// Generator of a finite chain in sparse row form.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    labels: Vec<String>,
    /// Off-diagonal `(column, rate)` per row.
    rows: Vec<Vec<(usize, f64)>>,
}

impl RateMatrix {
    pub fn from_rows(labels: Vec<String>, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(labels.len(), rows.len());
        RateMatrix { labels, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Total exit rate of state `a`.
    pub fn exit_rate(&self, a: usize) -> f64 {
        self.rows[a].iter().map(|&(_, q)| q).sum()
    }

    /// `q(a, b)`, with the diagonal equal to minus the exit rate.
    pub fn rate(&self, a: usize, b: usize) -> f64 {
        if a == b {
            -self.exit_rate(a)
        } else {
            self.rows[a]
                .iter()
                .filter(|&&(c, _)| c == b)
                .map(|&(_, q)| q)
                .sum()
        }
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, q) in row {
                m[a][b] += q;
                m[a][a] -= q;
            }
        }
        m
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.len())
            .map(|a| self.exit_rate(a))
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dense();
        (0..d.len()).all(|a| (0..d.len()).all(|b| d[a][b] == d[b][a]))
    }

    /// One step of the uniformized chain applied to a row vector: `v S`.
    fn step(&self, v: &[f64], lambda: f64) -> Vec<f64> {
        let mut out = v.to_vec();
        for (a, row) in self.rows.iter().enumerate() {
            if v[a] == 0.0 {
                continue;
            }
            for &(b, q) in row {
                let flow = v[a] * q / lambda;
                out[b] += flow;
                out[a] -= flow;
            }
        }
        out
    }
}

/// `P(t)` with its certified truncation bound.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub entries: Vec<Vec<f64>>,
    pub trunc_error: f64,
    pub terms: usize,
}

impl TransitionMatrix {
    pub fn max_row_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Sites of a segment of `n` sites as used by the exclusion and stirring
/// models; the bond `(0, 1)` sits in the middle.
pub fn segment_window(n: usize) -> LatticeWindow {
    LatticeWindow::centered_segment(n)
}

fn check_size(states: usize) -> Result<()> {
    if states > STATE_LIMIT {
        Err(Error::StateSpaceTooLarge {
            states,
            limit: STATE_LIMIT,
        })
    } else {
        Ok(())
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn factorial(n: usize) -> usize {
    (1..=n).fold(1usize, |acc, i| acc.saturating_mul(i))
}

fn bits_label(bits: u64, n: usize) -> String {
    (0..n)
        .map(|i| if bits >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Lexicographic rank of a permutation of `0..n`.
pub fn perm_rank(perm: &[usize]) -> usize {
    let n = perm.len();
    let mut rank = 0;
    for i in 0..n {
        let smaller = perm[i + 1..].iter().filter(|&&p| p < perm[i]).count();
        rank += smaller * factorial(n - 1 - i);
    }
    rank
}

/// Permutation of `0..n` with the given lexicographic rank.
pub fn perm_unrank(mut rank: usize, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let f = factorial(n - 1 - i);
        out.push(pool.remove(rank / f));
        rank %= f;
    }
    out
}

/// Exact rates of `model`: every admissible exchange or transposition
/// happens at rate 1/2; the walker jumps to each neighbour at rate 1/2.
///
/// Exclusion states are configurations ordered by their binary value (bit
/// `i` is site `i` from the left). Stirring states are forward maps
/// (label index -> site index) ordered by lexicographic rank.
pub fn build_generator(model: Model) -> Result<RateMatrix> {
    match model {
        Model::ExclusionRing { sites, particles } => {
            exclusion_generator(sites, Some(particles), true)
        }
        Model::ExclusionSegment { sites, particles } => {
            exclusion_generator(sites, particles, false)
        }
        Model::StirringSegment { sites } => {
            let states = factorial(sites);
            check_size(states)?;
            let mut labels = Vec::with_capacity(states);
            let mut rows = Vec::with_capacity(states);
            for rank in 0..states {
                let forward = perm_unrank(rank, sites);
                labels.push(format!("{forward:?}"));
                let mut row = Vec::new();
                for x in 0..sites.saturating_sub(1) {
                    let mut next = forward.clone();
                    for p in next.iter_mut() {
                        if *p == x {
                            *p = x + 1;
                        } else if *p == x + 1 {
                            *p = x;
                        }
                    }
                    row.push((perm_rank(&next), 0.5));
                }
                rows.push(row);
            }
            Ok(RateMatrix::from_rows(labels, rows))
        }
        Model::SingleWalker { half_width } => {
            let n = 2 * half_width + 1;
            check_size(n)?;
            let w = half_width as i64;
            let labels = (-w..=w).map(|x| x.to_string()).collect();
            let rows = (0..n)
                .map(|i| {
                    let mut row = Vec::new();
                    if i > 0 {
                        row.push((i - 1, 0.5));
                    }
                    if i + 1 < n {
                        row.push((i + 1, 0.5));
                    }
                    row
                })
                .collect();
            Ok(RateMatrix::from_rows(labels, rows))
        }
    }
}

fn exclusion_generator(sites: usize, particles: Option<usize>, ring: bool) -> Result<RateMatrix> {
    if sites > 40 {
        return Err(Error::StateSpaceTooLarge {
            states: usize::MAX,
            limit: STATE_LIMIT,
        });
    }
    let states_total = match particles {
        Some(k) => binomial(sites, k),
        None => 1usize << sites,
    };
    check_size(states_total)?;
    let configs: Vec<u64> = (0..1u64 << sites)
        .filter(|c| particles.is_none_or(|k| c.count_ones() as usize == k))
        .collect();
    let index: BTreeMap<u64, usize> = configs.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let bonds: Vec<(usize, usize)> = (0..sites.saturating_sub(1))
        .map(|x| (x, x + 1))
        .chain((ring && sites > 2).then_some((sites - 1, 0)))
        .collect();
    let rows = configs
        .iter()
        .map(|&c| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for &(x, y) in &bonds {
                if (c >> x & 1) != (c >> y & 1) {
                    let next = c ^ (1 << x) ^ (1 << y);
                    row.push((index[&next], 0.5));
                }
            }
            row
        })
        .collect();
    let labels = configs.iter().map(|&c| bits_label(c, sites)).collect();
    Ok(RateMatrix::from_rows(labels, rows))
}

/// Poisson weights `e^{-m} m^k / k!` for `k = 0..K`, where `K` is the first
/// index past the mode whose remaining tail is certified below `tol`.
fn poisson_weights(mean: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    if mean == 0.0 {
        return Ok((vec![1.0], 0.0));
    }
    let mut weights = Vec::new();
    let mut log_w = -mean;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        weights.push(w);
        let next_k = k + 1;
        // tail after k: sum_{j > k} w_j <= w_{k+1} / (1 - m / (k + 2))
        if (next_k as f64) + 1.0 > mean {
            let w_next = w * mean / next_k as f64;
            let ratio = mean / (next_k as f64 + 1.0);
            let tail = w_next / (1.0 - ratio);
            if tail < tol {
                return Ok((weights, tail));
            }
        }
        if next_k >= TERM_CAP {
            return Err(Error::ToleranceUnattainable { tol, cap: TERM_CAP });
        }
        log_w += mean.ln() - (next_k as f64).ln();
        k = next_k;
    }
}

/// `P(t)` by uniformization.
pub fn uniformized_transition(q: &RateMatrix, t: f64, tol: f64) -> Result<TransitionMatrix> {
    assert!(t >= 0.0 && tol > 0.0);
    let n = q.len();
    let lambda = q.max_exit_rate();
    let identity: Vec<Vec<f64>> = (0..n)
        .map(|a| (0..n).map(|b| (a == b) as u8 as f64).collect())
        .collect();
    if lambda == 0.0 || t == 0.0 {
        return Ok(TransitionMatrix {
            entries: identity,
            trunc_error: 0.0,
            terms: 1,
        });
    }
    let (weights, tail) = poisson_weights(lambda * t, tol)?;
    let mut result = vec![vec![0.0; n]; n];
    // each row is propagated on its own: row a of S^k is e_a S^k
    for (a, row_out) in result.iter_mut().enumerate() {
        let mut v = identity[a].clone();
        for (k, &w) in weights.iter().enumerate() {
            if k > 0 {
                v = q.step(&v, lambda);
            }
            for (o, x) in row_out.iter_mut().zip(&v) {
                *o += w * x;
            }
        }
    }
    let rounding = weights.len() as f64 * n as f64 * f64::EPSILON;
    Ok(TransitionMatrix {
        entries: result,
        trunc_error: tail + rounding,
        terms: weights.len(),
    })
}

/// `p0 P(t)` for a single initial distribution.
pub fn transient_distribution(
    q: &RateMatrix,
    p0: &[f64],
    t: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let lambda = q.max_exit_rate();
    if lambda == 0.0 || t == 0.0 {
        return Ok((p0.to_vec(), 0.0));
    }
    let (weights, tail) = poisson_weights(lambda * t, tol)?;
    let mut v = p0.to_vec();
    let mut out = vec![0.0; p0.len()];
    for (k, &w) in weights.iter().enumerate() {
        if k > 0 {
            v = q.step(&v, lambda);
        }
        for (o, x) in out.iter_mut().zip(&v) {
            *o += w * x;
        }
    }
    Ok((
        out,
        tail + weights.len() as f64 * p0.len() as f64 * f64::EPSILON,
    ))
}

/// Dense matrix product, for Chapman-Kolmogorov checks.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (k, bk) in b.iter().enumerate() {
            let aik = a[i][k];
            if aik != 0.0 {
                for j in 0..m {
                    out[i][j] += aik * bk[j];
                }
            }
        }
    }
    out
}

/// Law of the stirring forward map at time `t` started from the identity,
/// indexed by lexicographic rank.
pub fn stirring_law(sites: usize, t: f64, tol: f64) -> Result<Vec<f64>> {
    let q = build_generator(Model::StirringSegment { sites })?;
    let mut p0 = vec![0.0; q.len()];
    p0[0] = 1.0;
    Ok(transient_distribution(&q, &p0, t, tol)?.0)
}

/// Worst inequality margin within one `(|T|, |A|)` class.
#[derive(Debug, Clone, PartialEq)]
pub struct NegCorrClass {
    pub labels: usize,
    pub sites: usize,
    pub pairs: usize,
    /// `min (prod P(xi^i in A) - P(all xi^i in A))`.
    pub worst_margin: f64,
}

#[derive(Debug, Clone)]
pub struct NegCorrReport {
    pub n_sites: usize,
    pub time: f64,
    /// Largest `P(all in A) - prod P(in A)` over all `(T, A)`; `<= tol`
    /// means the inequality holds.
    pub max_violation: f64,
    pub classes: Vec<NegCorrClass>,
    pub tol: f64,
}

impl NegCorrReport {
    pub fn holds(&self) -> bool {
        self.max_violation <= self.tol
    }

    /// CSV with columns `labels,sites,pairs,worst_margin`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "labels,sites,pairs,worst_margin")?;
        for c in &self.classes {
            writeln!(
                out,
                "{},{},{},{:.17e}",
                c.labels, c.sites, c.pairs, c.worst_margin
            )?;
        }
        Ok(())
    }
}

/// Checks `P(cap_{i in T} xi_t^i in A) <= prod_{i in T} P(xi_t^i in A)` for
/// every nonempty label set `T` and every site set `A` of a segment.
pub fn check_negative_correlation(n_sites: usize, t: f64, tol: f64) -> Result<NegCorrReport> {
    if n_sites > 5 {
        return Err(Error::StateSpaceTooLarge {
            states: factorial(n_sites),
            limit: factorial(5),
        });
    }
    let law = stirring_law(n_sites, t, 1e-15)?;
    let perms: Vec<Vec<usize>> = (0..law.len()).map(|r| perm_unrank(r, n_sites)).collect();
    let mut classes: BTreeMap<(usize, usize), NegCorrClass> = BTreeMap::new();
    let mut max_violation = f64::NEG_INFINITY;
    for tset in 1u32..(1 << n_sites) {
        for aset in 0u32..(1 << n_sites) {
            let inside = |p: &Vec<usize>, i: usize| aset >> p[i] & 1 == 1;
            let labels: Vec<usize> = (0..n_sites).filter(|&i| tset >> i & 1 == 1).collect();
            let joint: f64 = perms
                .iter()
                .zip(&law)
                .filter(|(p, _)| labels.iter().all(|&i| inside(p, i)))
                .map(|(_, &w)| w)
                .sum();
            let product: f64 = labels
                .iter()
                .map(|&i| {
                    perms
                        .iter()
                        .zip(&law)
                        .filter(|(p, _)| inside(p, i))
                        .map(|(_, &w)| w)
                        .sum::<f64>()
                })
                .product();
            let violation = joint - product;
            max_violation = max_violation.max(violation);
            let key = (labels.len(), aset.count_ones() as usize);
            let entry = classes.entry(key).or_insert(NegCorrClass {
                labels: key.0,
                sites: key.1,
                pairs: 0,
                worst_margin: f64::INFINITY,
            });
            entry.pairs += 1;
            entry.worst_margin = entry.worst_margin.min(-violation);
        }
    }
    Ok(NegCorrReport {
        n_sites,
        time: t,
        max_violation,
        classes: classes.into_values().collect(),
        tol,
    })
}

/// `E[max(z(t), 0)]` for the rate-1 symmetric walk started at 0, computed
/// on `-truncation..=truncation`.
pub fn mean_positive_walk(t: f64, truncation: usize) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let q = build_generator(Model::SingleWalker {
        half_width: truncation,
    })?;
    let mut p0 = vec![0.0; q.len()];
    p0[truncation] = 1.0;
    let (p, _) = transient_distribution(&q, &p0, t, 1e-15)?;
    let mass = p[0] + p[p.len() - 1];
    if mass >= 1e-12 {
        return Err(Error::TruncationTooSmall {
            half_width: truncation as i32,
            mass,
        });
    }
    Ok(p.iter()
        .enumerate()
        .map(|(i, &w)| (i as f64 - truncation as f64).max(0.0) * w)
        .sum())
}

/// A walker truncation that keeps the boundary mass negligible up to `t`.
pub fn walker_truncation(t: f64) -> usize {
    (t + 12.0 * (t + 1.0).sqrt() + 30.0).ceil() as usize
}

/// Law of an integer-valued observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    pub min: i64,
    pub probs: Vec<f64>,
}

impl Pmf {
    pub fn prob(&self, j: i64) -> f64 {
        if j < self.min {
            return 0.0;
        }
        self.probs
            .get((j - self.min) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn max(&self) -> i64 {
        self.min + self.probs.len() as i64 - 1
    }

    pub fn from_counts(counts: &BTreeMap<i64, u64>) -> Pmf {
        let total: u64 = counts.values().sum();
        let min = *counts.keys().next().unwrap_or(&0);
        let max = *counts.keys().last().unwrap_or(&0);
        let probs = (min..=max)
            .map(|j| counts.get(&j).copied().unwrap_or(0) as f64 / total as f64)
            .collect();
        Pmf { min, probs }
    }

    pub fn total_variation(&self, other: &Pmf) -> f64 {
        let lo = self.min.min(other.min);
        let hi = self.max().max(other.max());
        0.5 * (lo..=hi)
            .map(|j| (self.prob(j) - other.prob(j)).abs())
            .sum::<f64>()
    }
}

/// Exact law of the current across the middle bond `(0, 1)` of an
/// `n_sites` segment started from Bernoulli(`rho`) occupancies, combining
/// every initial configuration with the exact stirring law.
pub fn exact_current_distribution(n_sites: usize, rho: f64, t: f64) -> Result<Pmf> {
    if n_sites > 5 {
        return Err(Error::StateSpaceTooLarge {
            states: factorial(n_sites),
            limit: factorial(5),
        });
    }
    let window = segment_window(n_sites);
    let law = stirring_law(n_sites, t, 1e-15)?;
    let perms: Vec<Vec<usize>> = (0..law.len()).map(|r| perm_unrank(r, n_sites)).collect();
    let lo = -(n_sites as i64);
    let mut probs = vec![0.0; 2 * n_sites + 1];
    for bits in 0u32..(1 << n_sites) {
        let ones = bits.count_ones() as i32;
        let weight = rho.powi(ones) * (1.0 - rho).powi(n_sites as i32 - ones);
        if weight == 0.0 {
            continue;
        }
        for (perm, &w) in perms.iter().zip(&law) {
            let mut j = 0i64;
            for (label_idx, &site_idx) in perm.iter().enumerate() {
                if bits >> label_idx & 1 == 0 {
                    continue;
                }
                let from = window.site(label_idx);
                let to = window.site(site_idx);
                if from <= 0 && to > 0 {
                    j += 1;
                } else if from > 0 && to <= 0 {
                    j -= 1;
                }
            }
            probs[(j - lo) as usize] += weight * w;
        }
    }
    // trim zero tails
    let first = probs.iter().position(|&p| p > 0.0).unwrap_or(0);
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok(Pmf {
        min: lo + first as i64,
        probs: probs[first..=last].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_model() {
        let q = build_generator(Model::ExclusionSegment {
            sites: 2,
            particles: Some(1),
        })
        .unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.rate(0, 1), 0.5);
        assert_eq!(q.rate(1, 0), 0.5);
        let p = uniformized_transition(&q, 2f64.ln(), 1e-14).unwrap();
        assert!((p.entries[0][0] - 0.75).abs() < 1e-10);
        assert!((p.entries[0][1] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn stirring_four_sites_structure() {
        let q = build_generator(Model::StirringSegment { sites: 4 }).unwrap();
        assert_eq!(q.len(), 24);
        let d = q.dense();
        for (a, row) in d.iter().enumerate() {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
            assert_eq!(q.exit_rate(a), 1.5);
            assert!(row
                .iter()
                .enumerate()
                .all(|(b, &v)| a == b || v == 0.0 || v == 0.5));
        }
        assert_eq!(q.labels()[0], "[0, 1, 2, 3]");
    }

    #[test]
    fn ring_generator_is_symmetric() {
        let q = build_generator(Model::ExclusionRing {
            sites: 6,
            particles: 3,
        })
        .unwrap();
        assert_eq!(q.len(), 20);
        assert!(q.is_symmetric());
    }

    #[test]
    fn oversized_state_space_is_rejected() {
        assert!(matches!(
            build_generator(Model::StirringSegment { sites: 9 }),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        assert!(matches!(
            build_generator(Model::ExclusionSegment {
                sites: 20,
                particles: None
            }),
            Err(Error::StateSpaceTooLarge { .. })
        ));
        assert!(check_negative_correlation(6, 1.0, 1e-12).is_err());
        assert!(exact_current_distribution(6, 0.5, 1.0).is_err());
    }

    #[test]
    fn perm_rank_round_trip() {
        for r in 0..120 {
            assert_eq!(perm_rank(&perm_unrank(r, 5)), r);
        }
        assert_eq!(perm_unrank(0, 3), vec![0, 1, 2]);
        assert_eq!(perm_unrank(5, 3), vec![2, 1, 0]);
    }

    #[test]
    fn zero_time_is_identity() {
        let q = build_generator(Model::StirringSegment { sites: 3 }).unwrap();
        let p = uniformized_transition(&q, 0.0, 1e-12).unwrap();
        for (a, row) in p.entries.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                assert_eq!(v, (a == b) as u8 as f64);
            }
        }
    }

    #[test]
    fn uniform_law_is_invariant_on_ring() {
        let q = build_generator(Model::ExclusionRing {
            sites: 6,
            particles: 3,
        })
        .unwrap();
        let tol = 1e-12;
        let p = uniformized_transition(&q, 1.7, tol).unwrap();
        let n = q.len();
        for b in 0..n {
            let col: f64 = (0..n).map(|a| p.entries[a][b] / n as f64).sum();
            assert!((col - 1.0 / n as f64).abs() < tol);
        }
    }

    #[test]
    fn rows_sum_to_one_and_chapman_kolmogorov() {
        let q = build_generator(Model::StirringSegment { sites: 4 }).unwrap();
        let tol = 1e-13;
        let ps = uniformized_transition(&q, 0.3, tol).unwrap();
        let pt = uniformized_transition(&q, 0.7, tol).unwrap();
        let pst = uniformized_transition(&q, 1.0, tol).unwrap();
        for p in [&ps, &pt, &pst] {
            assert!(p.max_row_defect() <= p.trunc_error);
            assert!(p
                .entries
                .iter()
                .flatten()
                .all(|&v| v >= -p.trunc_error && v <= 1.0 + p.trunc_error));
        }
        let prod = mat_mul(&ps.entries, &pt.entries);
        let max_diff = prod
            .iter()
            .flatten()
            .zip(pst.entries.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 10.0 * tol, "{max_diff}");
    }

    #[test]
    fn negative_correlation_four_sites() {
        let r = check_negative_correlation(4, 1.0, 1e-12).unwrap();
        assert!(r.max_violation <= 1e-12, "{}", r.max_violation);
        // |T| = 1 gives equality
        for c in r.classes.iter().filter(|c| c.labels == 1) {
            assert_eq!(c.worst_margin, 0.0);
        }
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("labels,sites,pairs,worst_margin\n"));
    }

    #[test]
    fn negative_correlation_at_time_zero() {
        let r = check_negative_correlation(3, 0.0, 1e-12).unwrap();
        assert!(r.max_violation <= 0.0);
    }

    #[test]
    fn positive_walk_mean() {
        assert_eq!(mean_positive_walk(0.0, 10).unwrap(), 0.0);
        for t in [1.0, 4.0, 16.0, 64.0] {
            let m = mean_positive_walk(t, walker_truncation(t)).unwrap();
            assert!(m <= t.sqrt(), "t {t}: {m}");
        }
        let m64 = mean_positive_walk(64.0, walker_truncation(64.0)).unwrap();
        let limit = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m64 / 8.0 / limit - 1.0).abs() < 0.02);
        assert!(matches!(
            mean_positive_walk(64.0, 20),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn positive_walk_matches_bessel_series() {
        // E|z(t)| for the rate-1 walk: sum_k |k| e^{-t} I_k(t), with I_k from
        // its power series; E z+ is half of it
        let t: f64 = 3.0;
        let bessel = |k: u32| -> f64 {
            (0..60u32)
                .map(|m| {
                    let lg = statrs::function::gamma::ln_gamma((m + 1) as f64)
                        + statrs::function::gamma::ln_gamma((m + k + 1) as f64);
                    ((2 * m + k) as f64 * (t / 2.0).ln() - lg).exp()
                })
                .sum()
        };
        let abs_mean: f64 = (1..60u32)
            .map(|k| 2.0 * k as f64 * (-t).exp() * bessel(k))
            .sum();
        let m = mean_positive_walk(t, walker_truncation(t)).unwrap();
        assert!(
            (m - abs_mean / 2.0).abs() < 1e-12,
            "{m} vs {}",
            abs_mean / 2.0
        );
    }

    #[test]
    fn current_law_properties() {
        let p0 = exact_current_distribution(4, 0.0, 1.0).unwrap();
        assert_eq!(p0.min, 0);
        assert!((p0.prob(0) - 1.0).abs() < 1e-15);
        let p = exact_current_distribution(4, 0.5, 1.0).unwrap();
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 1..=4 {
            assert!((p.prob(j) - p.prob(-j)).abs() < 1e-13);
        }
    }

    #[test]
    fn current_law_two_sites_closed_form() {
        // one bond: J = +1 iff (1,0) and an odd number of rings by t
        let t = 0.8;
        let p = exact_current_distribution(2, 0.5, t).unwrap();
        let odd = 0.5 * (1.0 - (-t).exp());
        assert!((p.prob(1) - 0.25 * odd).abs() < 1e-13);
        assert!((p.prob(-1) - 0.25 * odd).abs() < 1e-13);
    }
}
