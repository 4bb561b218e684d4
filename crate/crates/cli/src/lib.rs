//! Library side of the `adscope` command: each subcommand is a function
//! here, so tests can drive the pipeline without spawning processes.

pub mod config;
pub mod error;
pub mod ingest;
pub mod policy_eval;
pub mod report;
pub mod simulate;
pub mod state;
pub mod uniqueness;

pub use config::{Overrides, RunConfig, Settings};
pub use error::CliError;
pub use state::State;
