//! Config-driven driver: solve, profile, verify and bound in one pipeline.

pub mod config;
pub mod error;
pub mod run;

pub use config::{load_config, parse_config, RunConfig};
pub use error::CliError;
pub use run::{run, Outcome, RunOptions, Stage};
