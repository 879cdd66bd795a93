//! Config-driven experiment runner for the `coulomb-gas` sampler.

pub mod config;
pub mod runner;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use runner::{run_config, run_path, scan_dt, RunError, RunOptions, RunSummary, ScanResult};
