//! Lattice windows, occupancy configurations, densities and seeded streams.
//!
//! Sites are signed integers. A window is a contiguous segment of sites with
//! nearest-neighbor bonds `(x, x+1)` strictly inside it; nothing crosses the
//! window edge.
//!
//! Random streams are derived statelessly from a master seed, a purpose tag
//! and a signed index, so the stream attached to a given bond or site does
//! not depend on how large the surrounding window is.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// A finite segment `left..=right` of the integer lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeWindow {
    left: i32,
    right: i32,
}

impl LatticeWindow {
    /// The symmetric window `-half_width..=half_width`.
    pub fn new(half_width: u32) -> Self {
        assert!(half_width > 0, "half width must be positive");
        let w = half_width as i32;
        LatticeWindow { left: -w, right: w }
    }

    /// An arbitrary segment, used by the small exact models (e.g. four sites
    /// `-1..=2` around the origin bond).
    pub fn with_bounds(left: i32, right: i32) -> Self {
        assert!(left <= right, "empty window");
        LatticeWindow { left, right }
    }

    /// A segment of `n` sites placed so that the bond `(0, 1)` sits in the
    /// middle: `-(n-1)/2 ..= n-1-(n-1)/2`.
    pub fn centered_segment(n: usize) -> Self {
        assert!(n >= 2, "need at least two sites");
        let left = -((n as i32 - 1) / 2);
        LatticeWindow::with_bounds(left, left + n as i32 - 1)
    }

    pub fn left(&self) -> i32 {
        self.left
    }

    pub fn right(&self) -> i32 {
        self.right
    }

    /// Half width for symmetric windows.
    pub fn half_width(&self) -> Option<u32> {
        (self.left == -self.right && self.right > 0).then_some(self.right as u32)
    }

    pub fn site_count(&self) -> usize {
        (self.right - self.left + 1) as usize
    }

    pub fn bond_count(&self) -> usize {
        self.site_count() - 1
    }

    pub fn contains(&self, x: i32) -> bool {
        (self.left..=self.right).contains(&x)
    }

    /// True when both `x` and `x + 1` are inside the window.
    pub fn has_bond(&self, x: i32) -> bool {
        x >= self.left && x < self.right
    }

    /// Dense index of site `x`. Panics when `x` is outside.
    #[inline]
    pub fn index(&self, x: i32) -> usize {
        debug_assert!(self.contains(x));
        (x - self.left) as usize
    }

    #[inline]
    pub fn site(&self, index: usize) -> i32 {
        self.left + index as i32
    }

    pub fn sites(&self) -> impl Iterator<Item = i32> {
        self.left..=self.right
    }

    /// Left endpoints `x` of the bonds `(x, x+1)`.
    pub fn bonds(&self) -> impl Iterator<Item = i32> {
        self.left..self.right
    }

    pub fn check_bond(&self, x: i32) -> Result<()> {
        if self.has_bond(x) {
            Ok(())
        } else {
            Err(Error::Boundary {
                x,
                left: self.left,
                right: self.right,
            })
        }
    }
}

/// Particle density of a Bernoulli product measure.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Density(f64);

impl Density {
    pub fn new(rho: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&rho) {
            Ok(Density(rho))
        } else {
            Err(Error::InvalidDensity(rho, "must lie in [0, 1]"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Occupancy of every site of a window, one byte per site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    window: LatticeWindow,
    occupancy: Vec<u8>,
}

impl Configuration {
    pub fn empty(window: LatticeWindow) -> Self {
        Configuration {
            window,
            occupancy: vec![0; window.site_count()],
        }
    }

    pub fn full(window: LatticeWindow) -> Self {
        Configuration {
            window,
            occupancy: vec![1; window.site_count()],
        }
    }

    /// Builds a configuration from explicit occupancies listed left to right.
    pub fn from_occupancy(window: LatticeWindow, occupancy: Vec<u8>) -> Result<Self> {
        if occupancy.len() != window.site_count() {
            return Err(Error::WindowMismatch(format!(
                "{} occupancies for {} sites",
                occupancy.len(),
                window.site_count()
            )));
        }
        if occupancy.iter().any(|&v| v > 1) {
            return Err(Error::Degenerate("occupancy values must be 0 or 1".into()));
        }
        Ok(Configuration { window, occupancy })
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    /// Occupancy at site `x`, which must be inside the window.
    #[inline]
    pub fn get(&self, x: i32) -> u8 {
        self.occupancy[self.window.index(x)]
    }

    pub fn set(&mut self, x: i32, value: bool) {
        let i = self.window.index(x);
        self.occupancy[i] = value as u8;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn particle_count(&self) -> usize {
        self.occupancy.iter().map(|&v| v as usize).sum()
    }

    /// Swaps the occupancies at `x` and `x + 1` in place.
    pub fn exchange_in_place(&mut self, x: i32) -> Result<()> {
        self.window.check_bond(x)?;
        let i = self.window.index(x);
        self.occupancy.swap(i, i + 1);
        Ok(())
    }

    /// Occupied sites in increasing order.
    pub fn occupied_sites(&self) -> impl Iterator<Item = i32> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| self.window.site(i))
    }
}

/// The configuration obtained from `config` by exchanging the values at
/// `x` and `x + 1`.
pub fn exchange(config: &Configuration, x: i32) -> Result<Configuration> {
    let mut out = config.clone();
    out.exchange_in_place(x)?;
    Ok(out)
}

/// Purpose tags that separate the streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Replicate = 1,
    Resample = 2,
    Bond = 3,
    Config = 4,
    Frame = 5,
    Bootstrap = 6,
    Synthetic = 7,
    Walker = 8,
}

/// A master seed from which every stream of a run is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    master_seed: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Stateless 64-bit key for `(master seed, tag, index)`.
    pub fn key(&self, tag: StreamTag, index: i64) -> u64 {
        let a = mix64(self.master_seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
        let b = mix64(a ^ (tag as u64).wrapping_mul(0xD134_2543_DE82_EF95));
        mix64(b ^ mix64((index as u64).wrapping_add(0x2545_F491_4F6C_DD1D)))
    }

    /// A child seed, e.g. the seed of one replicate.
    pub fn derive(&self, tag: StreamTag, index: i64) -> SeedSpec {
        SeedSpec::new(self.key(tag, index))
    }

    /// A fresh stream for `(tag, index)`.
    pub fn stream(&self, tag: StreamTag, index: i64) -> Stream {
        Stream::seed_from_u64(self.key(tag, index))
    }

    /// One uniform number in `[0, 1)` addressed by `(tag, index)`.
    pub fn unit(&self, tag: StreamTag, index: i64) -> f64 {
        (self.key(tag, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draws a configuration from the Bernoulli product measure at density
/// `rho`. Site `x` is occupied iff the uniform addressed by `x` is below
/// `rho`, so windows of different size agree on their shared sites.
pub fn sample_config(window: LatticeWindow, rho: Density, seed: &SeedSpec) -> Configuration {
    let occupancy = window
        .sites()
        .map(|x| (seed.unit(StreamTag::Config, x as i64) < rho.value()) as u8)
        .collect();
    Configuration { window, occupancy }
}

/// Geometric variate on `{1, 2, ...}` with `P(k) = rho (1 - rho)^(k-1)`.
pub fn sample_geometric<R: Rng + ?Sized>(rho: Density, rng: &mut R) -> Result<u64> {
    let p = rho.value();
    if p <= 0.0 {
        return Err(Error::InvalidDensity(p, "geometric law needs rho > 0"));
    }
    let dist = Geometric::new(p).map_err(|_| Error::InvalidDensity(p, "geometric law"))?;
    Ok(dist.sample(rng) + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(bits: &[u8]) -> Configuration {
        let w = LatticeWindow::with_bounds(0, bits.len() as i32 - 1);
        Configuration::from_occupancy(w, bits.to_vec()).unwrap()
    }

    #[test]
    fn window_counts() {
        let w = LatticeWindow::new(5);
        assert_eq!(w.site_count(), 11);
        assert_eq!(w.bond_count(), 10);
        assert_eq!(w.bonds().count(), 10);
        assert!(w.has_bond(-5) && w.has_bond(4) && !w.has_bond(5));
        assert_eq!(w.half_width(), Some(5));
        let seg = LatticeWindow::centered_segment(4);
        assert_eq!((seg.left(), seg.right()), (-1, 2));
        let seg5 = LatticeWindow::centered_segment(5);
        assert_eq!((seg5.left(), seg5.right()), (-2, 2));
    }

    #[test]
    fn degenerate_densities() {
        let w = LatticeWindow::new(50);
        let seed = SeedSpec::new(3);
        assert_eq!(
            sample_config(w, Density::new(0.0).unwrap(), &seed).particle_count(),
            0
        );
        assert_eq!(
            sample_config(w, Density::new(1.0).unwrap(), &seed).particle_count(),
            101
        );
        assert!(Density::new(1.5).is_err());
        assert!(Density::new(-0.1).is_err());
    }

    #[test]
    fn half_density_count_within_three_sd() {
        let w = LatticeWindow::new(500);
        let c = sample_config(w, Density::new(0.5).unwrap(), &SeedSpec::new(11));
        let n = w.site_count() as f64;
        let sd = (n * 0.25).sqrt();
        assert!((c.particle_count() as f64 - 500.5).abs() < 3.0 * sd);
    }

    #[test]
    fn exchange_moves_particle() {
        let c = cfg(&[1, 0, 1]);
        assert_eq!(exchange(&c, 0).unwrap().as_slice(), &[0, 1, 1]);
        assert_eq!(exchange(&c, 1).unwrap().as_slice(), &[1, 1, 0]);
        let same = cfg(&[1, 1, 0]);
        assert_eq!(exchange(&same, 0).unwrap(), same);
        let twice = exchange(&exchange(&c, 0).unwrap(), 0).unwrap();
        assert_eq!(twice, c);
    }

    #[test]
    fn exchange_outside_window_is_boundary_error() {
        let c = cfg(&[1, 0, 1]);
        assert!(matches!(exchange(&c, 2), Err(Error::Boundary { .. })));
        assert!(matches!(exchange(&c, -1), Err(Error::Boundary { .. })));
    }

    #[test]
    fn geometric_degenerate_and_error() {
        let mut rng = SeedSpec::new(1).stream(StreamTag::Synthetic, 0);
        for _ in 0..100 {
            assert_eq!(
                sample_geometric(Density::new(1.0).unwrap(), &mut rng).unwrap(),
                1
            );
        }
        assert!(sample_geometric(Density::new(0.0).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn geometric_half_mean_and_mass_at_one() {
        let mut rng = SeedSpec::new(2).stream(StreamTag::Synthetic, 0);
        let n = 100_000;
        let rho = Density::new(0.5).unwrap();
        let draws: Vec<u64> = (0..n)
            .map(|_| sample_geometric(rho, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        // variance (1 - rho) / rho^2 = 2
        let se = (2.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");
        let p1 = draws.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        let se1 = (0.25 / n as f64).sqrt();
        assert!((p1 - 0.5).abs() < 3.0 * se1, "p1 {p1}");
        assert!(draws.iter().all(|&k| k >= 1));
    }

    #[test]
    fn config_is_reproducible_and_window_independent() {
        let rho = Density::new(0.3).unwrap();
        let seed = SeedSpec::new(99);
        let small = sample_config(LatticeWindow::new(20), rho, &seed);
        let again = sample_config(LatticeWindow::new(20), rho, &seed);
        assert_eq!(small, again);
        let large = sample_config(LatticeWindow::new(40), rho, &seed);
        for x in -20..=20 {
            assert_eq!(small.get(x), large.get(x));
        }
    }

    #[test]
    fn bond_streams_are_uncorrelated() {
        let seed = SeedSpec::new(2024);
        for (a, b) in [(0i64, 1i64), (-3, 7), (100, 101)] {
            let mut ra = seed.stream(StreamTag::Bond, a);
            let mut rb = seed.stream(StreamTag::Bond, b);
            let n = 10_000;
            let xs: Vec<f64> = (0..n).map(|_| ra.random::<f64>()).collect();
            let ys: Vec<f64> = (0..n).map(|_| rb.random::<f64>()).collect();
            let mx = xs.iter().sum::<f64>() / n as f64;
            let my = ys.iter().sum::<f64>() / n as f64;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                sxy += (x - mx) * (y - my);
                sxx += (x - mx) * (x - mx);
                syy += (y - my) * (y - my);
            }
            let r = sxy / (sxx * syy).sqrt();
            assert!(r.abs() < 0.02, "bonds {a},{b}: r = {r}");
        }
    }

    #[test]
    fn occupancy_histogram_matches_bernoulli() {
        use crate::stats::chi_square_gof;
        for (k, rho) in [0.2, 0.5, 0.8].into_iter().enumerate() {
            let w = LatticeWindow::new(2000);
            let c = sample_config(w, Density::new(rho).unwrap(), &SeedSpec::new(40 + k as u64));
            let ones = c.particle_count() as u64;
            let zeros = w.site_count() as u64 - ones;
            let res = chi_square_gof(&[zeros, ones], &[1.0 - rho, rho]).unwrap();
            assert!(res.p_value > 1e-3, "rho {rho}: p = {}", res.p_value);
        }
    }
}
