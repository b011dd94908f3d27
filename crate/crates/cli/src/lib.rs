//! Experiment driver: configuration, replication fan-out, and CSV/JSON
//! output for the `front` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_infer, cmd_semisynth, cmd_simulate, cmd_zeta, CliError};
pub use config::{parse_config, parse_config_str, ConfigError, ExperimentSpec, Overrides, Profile};
