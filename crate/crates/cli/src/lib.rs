//! Experiment harness: layered configuration, the `free`, `train`,
//! `compare` and `sweep-k` drivers, and CSV/SVG output.

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, ENV_PREFIX, KEYS};
