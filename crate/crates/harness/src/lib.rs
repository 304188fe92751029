//! Experiment driver for `bfarl-core`: TOML experiment configs, parallel
//! seeded runs over bias grids, aggregation and result files.

pub mod config;
pub mod error;
pub mod oracles;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, Method};
pub use error::{HarnessError, Result};
pub use runner::{run_experiment, ExperimentOutput, RunRecord};
