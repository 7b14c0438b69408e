//! One-pass central moments up to order six with exact pairwise merging.

const ORDER: usize = 6;

/// Count, mean and central moment sums `sum (x - mean)^p` for `p = 2..=6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    sums: [f64; ORDER + 1],
}

impl Default for MomentAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl MomentAccumulator {
    pub fn new() -> Self {
        MomentAccumulator {
            count: 0,
            mean: 0.0,
            sums: [0.0; ORDER + 1],
        }
    }

    pub fn singleton(x: f64) -> Self {
        MomentAccumulator {
            count: 1,
            mean: x,
            sums: [0.0; ORDER + 1],
        }
    }

    pub fn push(&mut self, x: f64) {
        *self = self.merge(&Self::singleton(x));
    }

    /// `M_p` with the conventions `M_0 = n`, `M_1 = 0`.
    fn sum(&self, p: usize) -> f64 {
        match p {
            0 => self.count as f64,
            1 => 0.0,
            _ => self.sums[p],
        }
    }

    /// Combines two accumulators; both deviations are re-centred on the
    /// pooled mean through a binomial expansion.
    pub fn merge(&self, other: &Self) -> Self {
        if other.count == 0 {
            return *self;
        }
        if self.count == 0 {
            return *other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n;
        let shift_a = -nb * delta / n;
        let shift_b = na * delta / n;
        let mut sums = [0.0; ORDER + 1];
        for (p, slot) in sums.iter_mut().enumerate().skip(2) {
            let mut acc = 0.0;
            for k in 0..=p {
                let c = binomial(p, k);
                acc += c
                    * (shift_a.powi(k as i32) * self.sum(p - k)
                        + shift_b.powi(k as i32) * other.sum(p - k));
            }
            *slot = acc;
        }
        MomentAccumulator {
            count: self.count + other.count,
            mean,
            sums,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Central moment `m_p = M_p / n`.
    pub fn central_moment(&self, p: usize) -> f64 {
        assert!((2..=ORDER).contains(&p));
        if self.count == 0 {
            return f64::NAN;
        }
        self.sums[p] / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.sums[2] / (self.count - 1) as f64
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn se_variance(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 4 {
            return f64::NAN;
        }
        let s2 = self.variance();
        let m4 = self.central_moment(4);
        ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Deterministic pairwise merge of accumulators in slice order.
pub fn tree_merge(items: &[MomentAccumulator]) -> MomentAccumulator {
    match items.len() {
        0 => MomentAccumulator::new(),
        1 => items[0],
        n => {
            let (l, r) = items.split_at(n / 2);
            tree_merge(l).merge(&tree_merge(r))
        }
    }
}
