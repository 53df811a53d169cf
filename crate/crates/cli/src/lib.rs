//! Benchmark harness for `wbfo-core`: experiment configs, seeded trial
//! batteries, aggregates and CSV outputs. The `wbfo` binary is a thin
//! wrapper over [`harness::execute`].

pub mod config;
pub mod harness;
pub mod stats;

pub use config::{ConfigError, ExperimentConfig};
pub use harness::{execute, export_plotdata, Report, TrialRow};
pub use stats::Aggregate;
