//! Experiment runner for multi-pitch estimation: configuration, the
//! extract/split/train/evaluate pipeline, and report generation.

pub mod config;
pub mod pipeline;
pub mod plots;
pub mod report;

pub use config::{EvaluationConfig, ExperimentConfig, ModelSpec, SamplingConfig, CACHE_ENV};
