use thiserror::Error;

use crate::linalg::SolverReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("{solver} failed to converge: {report}")]
    SolverFailure {
        solver: &'static str,
        report: SolverReport,
    },

    #[error("nonlinear iteration did not converge after {iterations} sweeps (increment {increment:.3e})")]
    PicardFailure { iterations: usize, increment: f64 },

    #[error("manufactured source validation failed: max residual {max_residual:.3e} > {threshold:.1e}")]
    OracleGate { max_residual: f64, threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
