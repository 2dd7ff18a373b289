//! Exact and Monte Carlo numerics for the random pinning model whose
//! disorder is built from a heavy-tailed renewal process.
//!
//! - [`renewal`]: power-law inter-arrival laws, sampling, renewal mass
//!   tables, `N`-step laws and hitting probabilities.
//! - [`environment`]: the two constructions of the correlated `{0,-1}`
//!   environment, exact covariances, and a lossless on-disk format.
//! - [`pinning`]: partition-function dynamic programming, contact-number
//!   laws, backward path sampling and trajectory-level bounds.
//! - [`analysis`]: homogeneous and quenched free energies, exponent and
//!   tail fits.

pub mod analysis;
pub mod environment;
pub mod error;
pub mod pinning;
pub mod renewal;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};

/// Largest system size handled by the exact quadratic DP.
pub const MAX_EXACT_SIZE: usize = 1 << 16;
