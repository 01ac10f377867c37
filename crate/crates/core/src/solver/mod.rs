//! Convex subproblem solvers for the successive approximation loops.

pub mod barrier;
pub mod subproblem;

use thiserror::Error;

pub use barrier::{BarrierError, BarrierOptions, BarrierProblem, BarrierSolution};
pub use subproblem::{solve_feasibility, solve_scheduling, LinearConstraint, SolveReport, FEAS_TOL};

#[derive(Debug, Clone, Error)]
pub enum SolverError {
    #[error("warm start violates the constraints (max violation {max_violation:e})")]
    InfeasibleStart { max_violation: f64 },

    /// The iterations stalled; `best` is the last strictly feasible iterate.
    #[error("interior point iterations stalled after {} Newton steps", best.iterations)]
    NumericalFailure { best: Box<SolveReport> },
}
