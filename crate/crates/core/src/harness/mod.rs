//! Experiment orchestration: configuration, seed derivation, the threshold
//! table and the named experiments behind the command line tool.

pub mod config;
pub mod experiments;
pub mod seed;
pub mod thresholds;

pub use config::{parse_config, Config};
pub use experiments::{evaluate, run_experiment, Check, CsvFile, Report, EXPERIMENTS};
