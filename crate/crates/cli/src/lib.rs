//! Configuration, orchestration and table output for the `erasure-fcs`
//! command line tool.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, Command};
pub use config::{parse_config, ConfigError, Engine, ExperimentConfig};
pub use output::{write_tables, Table};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "ERASURE_FCS_OUT";
