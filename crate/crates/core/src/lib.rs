//! Frame-level multi-pitch estimation: harmonic CQT features, dataset
//! handling, leakage-aware splits, a model zoo, training and evaluation.

pub mod container;
pub mod error;
pub mod evaluation;
pub mod datasets;
pub mod models;
pub mod signal;
pub mod splits;
pub mod training;

pub use error::{Error, Result};
