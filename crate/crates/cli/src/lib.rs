//! Configuration, orchestration and reporting behind the `narrowgap` binary.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{parse_config, parse_config_str, CheckName, ConfigErrors, RunConfig};
pub use presets::RunItem;
pub use run::{execute, RunOptions, RunReport};
