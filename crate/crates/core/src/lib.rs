//! Simulator and verification lab for the one-dimensional symmetric simple
//! exclusion process: the graphical (stirring) construction, the current
//! through the origin, the tagged particle, exact small-system oracles and
//! the statistics that compare simulations with the scaling limits.

pub mod dynamics;
pub mod error;
pub mod graphical;
pub mod harness;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod stats;

pub use error::{Error, Result};
