//! Configuration, output and checkpoint handling behind the `polaron` binary.

pub mod checkpoint;
pub mod config;
pub mod execute;
pub mod output;

pub use config::{parse_config, parse_config_str, Command, ConfigError, RunConfig};
pub use execute::{execute, exit_code_for, main_with, Outcome};
