//! Experiment runner for `spiked-oamp`: TOML configs in, CSV and JSON out.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run_experiment, Outcome};
pub use compare::{compare_runs, CompareReport};
pub use config::{Command, ExperimentConfig, SEED_ENV};
pub use error::CliError;
