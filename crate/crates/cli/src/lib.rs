//! Configuration, experiment drivers and output files for the `mhd` binary.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Experiment, RunConfig};
pub use experiments::{run_experiment, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("step failed: {0}")]
    Step(String),
    #[error("source oracle failed: {0}")]
    Oracle(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Step(_) => 3,
            CliError::Oracle(_) => 4,
        }
    }
}

impl From<mhd_core::Error> for CliError {
    fn from(e: mhd_core::Error) -> Self {
        match e {
            mhd_core::Error::OracleGate { .. } => CliError::Oracle(e.to_string()),
            mhd_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Step(other.to_string()),
        }
    }
}
