//! Occupancy dynamics built on the stirring clocks, and the environment
//! process seen from a tagged particle.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::graphical::{EventLog, StirringTrajectory, BOND_RATE};
use crate::lattice::{Configuration, Density, LatticeWindow, SeedSpec, StreamTag};

#[derive(Debug, Clone)]
enum Route {
    /// `eta_t(x) = eta_0(label at x)`.
    Stirring(Arc<StirringTrajectory>),
    /// Exchanges applied ring by ring; snapshots every `stride` rings.
    Direct {
        stride: usize,
        snapshots: Vec<Configuration>,
    },
}

/// Exclusion process `eta_t` on a window, queryable at any `t <= horizon`.
#[derive(Debug, Clone)]
pub struct OccupancyTrajectory {
    initial: Configuration,
    log: Arc<EventLog>,
    route: Route,
}

impl OccupancyTrajectory {
    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn log(&self) -> &Arc<EventLog> {
        &self.log
    }

    pub fn window(&self) -> LatticeWindow {
        self.initial.window()
    }

    pub fn horizon(&self) -> f64 {
        self.log.horizon()
    }

    /// The whole configuration `eta_t`.
    pub fn at(&self, t: f64) -> Configuration {
        match &self.route {
            Route::Stirring(stirring) => {
                let window = self.window();
                let occupancy = stirring
                    .inverse_at(t)
                    .into_iter()
                    .map(|label| self.initial.get(label))
                    .collect();
                Configuration::from_occupancy(window, occupancy).expect("same window")
            }
            Route::Direct { stride, snapshots } => {
                let count = self.log.count_until(t);
                let snap = (count / stride).min(snapshots.len() - 1);
                let mut config = snapshots[snap].clone();
                for ring in &self.log.rings()[snap * stride..count] {
                    config
                        .exchange_in_place(ring.bond)
                        .expect("ring inside window");
                }
                config
            }
        }
    }

    /// `eta_t(x)`.
    pub fn occupied(&self, x: i32, t: f64) -> u8 {
        match &self.route {
            Route::Stirring(stirring) => {
                let inv = stirring.inverse_at(t);
                self.initial.get(inv[self.window().index(x)])
            }
            Route::Direct { .. } => self.at(t).get(x),
        }
    }

    /// Change points of the occupancies at `sites`: the initial values,
    /// then `(time, values)` after every ring that touches one of them.
    pub fn site_history(&self, sites: &[i32]) -> Vec<(f64, Vec<u8>)> {
        let mut config = self.initial.clone();
        let read = |c: &Configuration| sites.iter().map(|&x| c.get(x)).collect::<Vec<u8>>();
        let mut out = vec![(0.0, read(&config))];
        for ring in self.log.rings() {
            let touches = sites.iter().any(|&x| x == ring.bond || x == ring.bond + 1);
            config
                .exchange_in_place(ring.bond)
                .expect("ring inside window");
            if touches {
                let values = read(&config);
                if values != out.last().expect("nonempty").1 {
                    out.push((ring.time, values));
                }
            }
        }
        out
    }
}

/// Exclusion process read off the stirring process: `eta_t(x) = 1` iff a
/// label `i` with `eta_0(i) = 1` sits at `x`.
pub fn exclusion_from_stirring(
    config0: &Configuration,
    stirring: &Arc<StirringTrajectory>,
) -> Result<OccupancyTrajectory> {
    if config0.window() != stirring.window() {
        return Err(Error::WindowMismatch(format!(
            "configuration {:?} vs stirring {:?}",
            config0.window(),
            stirring.window()
        )));
    }
    Ok(OccupancyTrajectory {
        initial: config0.clone(),
        log: Arc::clone(stirring.log()),
        route: Route::Stirring(Arc::clone(stirring)),
    })
}

/// Exclusion process obtained by exchanging occupancies at every ring.
pub fn direct_exclusion(
    config0: &Configuration,
    log: &Arc<EventLog>,
) -> Result<OccupancyTrajectory> {
    if config0.window() != log.window() {
        return Err(Error::WindowMismatch(format!(
            "configuration {:?} vs event log {:?}",
            config0.window(),
            log.window()
        )));
    }
    let stride = ((log.len() as f64).sqrt().ceil() as usize).max(1);
    let mut config = config0.clone();
    let mut snapshots = vec![config.clone()];
    for (n, ring) in log.rings().iter().enumerate() {
        config.exchange_in_place(ring.bond)?;
        if (n + 1) % stride == 0 {
            snapshots.push(config.clone());
        }
    }
    Ok(OccupancyTrajectory {
        initial: config0.clone(),
        log: Arc::clone(log),
        route: Route::Direct { stride, snapshots },
    })
}

/// Circular frame buffer centred on the tagged particle.
#[derive(Debug, Clone)]
pub struct Frame {
    half_width: i32,
    offset: usize,
    cells: Vec<u8>,
}

impl Frame {
    fn new(half_width: i32, cells: Vec<u8>) -> Self {
        debug_assert_eq!(cells.len(), 2 * half_width as usize + 1);
        Frame {
            half_width,
            offset: 0,
            cells,
        }
    }

    #[inline]
    fn slot(&self, x: i32) -> usize {
        (self.offset + (x + self.half_width) as usize) % self.cells.len()
    }

    /// `zeta(x)` for `-W <= x <= W`.
    #[inline]
    pub fn get(&self, x: i32) -> u8 {
        self.cells[self.slot(x)]
    }

    #[inline]
    fn set(&mut self, x: i32, v: u8) {
        let s = self.slot(x);
        self.cells[s] = v;
    }

    pub fn half_width(&self) -> i32 {
        self.half_width
    }

    /// Frame contents from `-W` to `W`.
    pub fn to_vec(&self) -> Vec<u8> {
        (-self.half_width..=self.half_width)
            .map(|x| self.get(x))
            .collect()
    }

    fn exchange(&mut self, x: i32) {
        let (a, b) = (self.slot(x), self.slot(x + 1));
        self.cells.swap(a, b);
    }

    /// Applies `tau_k` for `k = +-1`: the tagged particle moves `k` steps
    /// and the frame follows it. The site entering at the far edge gets
    /// `fresh`.
    fn shift(&mut self, k: i32, fresh: u8) {
        let len = self.cells.len();
        if k == 1 {
            self.offset = (self.offset + 1) % len;
            // the old left edge now sits at +W
            self.set(self.half_width, fresh);
        } else {
            self.offset = (self.offset + len - 1) % len;
            self.set(-self.half_width, fresh);
        }
        // tagged particle at the new origin, the vacated site at -k
        self.set(0, 1);
        self.set(-k, 0);
    }
}

/// The environment seen from the tagged particle, with its displacement.
#[derive(Debug, Clone)]
pub struct LagrangianTrajectory {
    pub initial: Vec<u8>,
    pub final_frame: Frame,
    pub horizon: f64,
    /// `(time, +-1)` for every accepted shift.
    pub shifts: Vec<(f64, i8)>,
    /// Change points of `zeta(-1) - zeta(1)` as `(time, value)`.
    drift_changes: Vec<(f64, i8)>,
    pub exchange_count: u64,
}

impl LagrangianTrajectory {
    /// `Z(t) = N_+(t) - N_-(t)`.
    pub fn displacement(&self, t: f64) -> i64 {
        let (p, m) = self.shift_counts(t);
        p as i64 - m as i64
    }

    /// `(N_+(t), N_-(t))`.
    pub fn shift_counts(&self, t: f64) -> (u64, u64) {
        let n = self.shifts.partition_point(|s| s.0 <= t);
        self.shifts[..n].iter().fold(
            (0, 0),
            |(p, m), s| {
                if s.1 > 0 {
                    (p + 1, m)
                } else {
                    (p, m + 1)
                }
            },
        )
    }

    /// `(1/2) int_0^t (zeta_s(-1) - zeta_s(1)) ds`, summed exactly over
    /// the piecewise-constant integrand.
    pub fn additive_part(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &(start, value)) in self.drift_changes.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = self
                .drift_changes
                .get(k + 1)
                .map_or(t, |next| next.0.min(t));
            acc += 0.5 * value as f64 * (end - start);
        }
        acc
    }

    /// `Z(t) - A(t)`.
    pub fn martingale_part(&self, t: f64) -> f64 {
        self.displacement(t) as f64 - self.additive_part(t)
    }
}

/// Simulates the environment process of the tagged particle.
///
/// Exchange clocks ring at rate 1/2 on every frame bond except `(-1, 0)` and
/// `(0, 1)`. Each direction carries a rate-1/2 candidate clock, accepted when
/// the target site is empty. All clocks have the same rate, so the
/// superposition is simulated with a single exponential clock and a uniform
/// choice of channel.
pub fn evolve_lagrangian(
    rho: Density,
    half_width: u32,
    horizon: f64,
    seed: &SeedSpec,
) -> Result<LagrangianTrajectory> {
    let p = rho.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(Error::InvalidDensity(p, "frame process needs 0 < rho < 1"));
    }
    let w = half_width as i32;
    if w < 2 {
        return Err(Error::Degenerate(
            "frame half width must be at least 2".into(),
        ));
    }
    let cells: Vec<u8> = (-w..=w)
        .map(|x| {
            if x == 0 {
                1
            } else {
                (seed.unit(StreamTag::Config, x as i64) < p) as u8
            }
        })
        .collect();
    let initial = cells.clone();
    evolve_frame(Frame::new(w, cells), initial, p, horizon, seed)
}

/// Runs the frame dynamics from a given frame (frame contents from `-W` to
/// `W`, with a particle at the origin).
pub fn evolve_lagrangian_from(
    frame: Vec<u8>,
    rho: Density,
    horizon: f64,
    seed: &SeedSpec,
) -> Result<LagrangianTrajectory> {
    if frame.len() < 5 || frame.len().is_multiple_of(2) {
        return Err(Error::Degenerate("frame needs odd length >= 5".into()));
    }
    let w = (frame.len() / 2) as i32;
    if frame[w as usize] != 1 {
        return Err(Error::Degenerate("frame origin must be occupied".into()));
    }
    let initial = frame.clone();
    evolve_frame(Frame::new(w, frame), initial, rho.value(), horizon, seed)
}

fn evolve_frame(
    mut frame: Frame,
    initial: Vec<u8>,
    rho: f64,
    horizon: f64,
    seed: &SeedSpec,
) -> Result<LagrangianTrajectory> {
    let w = frame.half_width();
    let mut rng = seed.stream(StreamTag::Frame, 0);
    // exchange bonds x in -W..W-1 minus {-1, 0}, plus two shift channels
    let exchange_bonds: Vec<i32> = (-w..w).filter(|&x| x != -1 && x != 0).collect();
    let channels = exchange_bonds.len() + 2;
    let total_rate = channels as f64 * BOND_RATE;

    let drift = |f: &Frame| f.get(-1) as i8 - f.get(1) as i8;
    let mut drift_changes = vec![(0.0, drift(&frame))];
    let mut shifts = Vec::new();
    let mut exchange_count = 0u64;
    let mut t = 0.0;
    loop {
        let gap: f64 = Exp1.sample(&mut rng);
        t += gap / total_rate;
        if t > horizon {
            break;
        }
        let c = rng.random_range(0..channels);
        if c < exchange_bonds.len() {
            frame.exchange(exchange_bonds[c]);
            exchange_count += 1;
        } else {
            let k = if c == exchange_bonds.len() { 1 } else { -1 };
            if frame.get(k) == 0 {
                let fresh = (rng.random::<f64>() < rho) as u8;
                frame.shift(k, fresh);
                shifts.push((t, k as i8));
            }
        }
        if frame.get(0) != 1 {
            return Err(Error::IdentityViolation {
                replicate: seed.master_seed(),
                time: t,
                detail: "frame origin lost its particle".into(),
            });
        }
        let d = drift(&frame);
        if d != drift_changes.last().expect("nonempty").1 {
            drift_changes.push((t, d));
        }
    }
    Ok(LagrangianTrajectory {
        initial,
        final_frame: frame,
        horizon,
        shifts,
        drift_changes,
        exchange_count,
    })
}
