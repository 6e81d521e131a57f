//! Experiment runner around the declab core: declarative configs, a
//! registry of named experiments with pass/fail checks, and CSV/JSON
//! artifact generation.

pub mod config;
pub mod registry;
pub mod runner;

pub use config::{CliError, ExperimentConfig};
