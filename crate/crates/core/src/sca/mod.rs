//! Per-iteration surrogates: a concave minorant of the throughput objective
//! and a convex restriction of every localization constraint, both tight at
//! the expansion point.

pub mod crb_bound;
pub mod objective;

pub use crb_bound::{
    h2, cross_term_bounds, pairwise_determinant, psi, CrossTermBounds, PairBound, SlotBound, SparseDerivs,
    TargetSurrogate,
};
pub use objective::{build_objective_surrogate, ObjectiveEval, ObjectiveSurrogate};

use crate::model::{Assignment, Trajectory};

/// Expansion point of one successive approximation step.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoint {
    pub traj: Trajectory,
    pub assign: Assignment,
}

impl LocalPoint {
    pub fn new(traj: Trajectory, assign: Assignment) -> Self {
        Self { traj, assign }
    }
}
