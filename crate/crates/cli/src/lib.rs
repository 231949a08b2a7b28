//! Command layer of the `abel2` binary, kept in a library so tests can drive it in-process.

pub mod commands;
pub mod config;

pub use commands::{run, Command, RunInputs, RunOutput};
pub use config::{parse_config, ProblemConfig};
