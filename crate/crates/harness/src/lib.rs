//! Experiment runner for the `cape` crate: configuration, the synthetic and
//! real-data drivers, and the report writers behind the `cape` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod report;

pub use config::{Cell, ExperimentConfig, Mode};
pub use error::{HarnessError, Result};
pub use experiment::{run, run_real, run_synthetic, ExperimentResult};
pub use report::emit_reports;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
