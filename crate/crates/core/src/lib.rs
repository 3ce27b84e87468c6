//! Human-in-the-loop Bayesian-optimized active recommender for spectral
//! imaging experiments.

pub mod cli;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod grid;
pub mod record;
pub mod recommender;
pub mod session;
pub mod similarity;
pub mod surrogate;

pub use dataset::Dataset;
pub use error::{Error, Result};

/// Seed of the synthetic benchmark grid used when none is given.
pub const DEFAULT_GRID_SEED: u64 = 0;
