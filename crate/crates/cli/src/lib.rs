pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, print_config, ConfigError, Experiment, RunConfig};
pub use run::{exit_code, run, Status};
