//! Experiment runner for the gsde laboratory: TOML configs in, CSV/JSON
//! artifacts and a manifest out.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{load_config, ExperimentConfig, Pipeline};
pub use runner::{run_experiment, Outcome, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK};
