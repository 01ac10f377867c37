use thiserror::Error;

use crate::solver::{BarrierError, SolverError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The window geometry does not provide two independent ranging directions.
    #[error("Fisher information matrix is singular")]
    SingularFim,

    #[error("detection threshold unreachable: {0}")]
    DetectionInfeasible(String),

    #[error("deployment region is empty: {0}")]
    EmptyDeploymentRegion(String),

    /// A surrogate was evaluated where its affine distance minorant is not positive.
    #[error("surrogate evaluated outside its domain")]
    Domain,

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

pub type Result<T> = std::result::Result<T, Error>;
