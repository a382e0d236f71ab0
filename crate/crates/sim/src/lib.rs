//! Experiment runner for the `vmrt-core` simulator: configuration files,
//! shipped presets, statistics, results bundles and golden vectors.

pub mod config;
pub mod presets;
pub mod runner;
pub mod stats;
pub mod vectors;

pub use config::{parse, ConfigError, ConfigFile, Overrides};
pub use runner::{run_config, Bundle, RunOptions, Summary};
pub use stats::{Comparison, Delta, RunStats};
