//! Batch driver for region characterization, reference-point discovery,
//! optimization, benchmarks and dense-grid audits.

pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

use isac_core::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParams(_) | Error::DimensionMismatch(_) => CliError::Config(msg),
            Error::DetectionInfeasible(_) | Error::EmptyDeploymentRegion(_) | Error::Infeasible(_) => {
                CliError::Infeasible(msg)
            }
            Error::SingularFim | Error::Domain | Error::Solver(_) | Error::Barrier(_) => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
