//! Experiment harness: configuration, seed-parallel execution, CSV
//! aggregation, SVG plotting and the CLI.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod plot;
pub mod selftest;
pub mod sweep;

pub use cli::cli_main;
pub use config::{ExperimentConfig, ExperimentKind};
pub use sweep::HarnessError;
