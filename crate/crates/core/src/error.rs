use thiserror::Error;

/// Errors produced by the simulator, the oracle and the statistics layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bond ({x}, {}) lies outside the window [{left}, {right}]", x + 1)]
    Boundary { x: i32, left: i32, right: i32 },

    #[error("window mismatch: {0}")]
    WindowMismatch(String),

    #[error("invalid density {0}: {1}")]
    InvalidDensity(f64, &'static str),

    #[error("state space of {states} states exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("tolerance {tol:e} not reached within {cap} uniformization terms")]
    ToleranceUnattainable { tol: f64, cap: usize },

    #[error("walker truncation {half_width} too small: boundary mass {mass:e}")]
    TruncationTooSmall { half_width: i32, mass: f64 },

    #[error("requested spacing range needs particle {index}, window holds too few")]
    RangeExceeded { index: i64 },

    #[error("no particle at any site <= 0 in the initial window")]
    NoTaggedParticle,

    #[error("resample rate {rate:.4} exceeds 1% ({resampled} of {replicates} replicates)")]
    ResampleRateExceeded {
        rate: f64,
        resampled: usize,
        replicates: usize,
    },

    #[error("pathwise identity violated in replicate {replicate} at t={time}: {detail}")]
    IdentityViolation {
        replicate: u64,
        time: f64,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Spec(#[from] crate::harness::SpecError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
