//! Batch front-end for delay-Doppler CRB, RSMA SINR and Monte-Carlo runs.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use commands::{run, Command, RunOptions, RunSummary};
pub use error::CliError;
pub use scenario::Scenario;
pub use sweep::SweepSpec;
