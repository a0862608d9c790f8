//! Library surface of the experiment runner, shared by the binary and the
//! acceptance suite.

pub mod config;
pub mod runner;

pub use config::{load_config, load_config_str, ConfigError, Experiment, Method, Profile};
pub use runner::{replay, run_experiment, CellResult, ExperimentOutcome, ReplaySummary};
