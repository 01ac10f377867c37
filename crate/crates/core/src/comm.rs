//! Downlink capacity and per-user throughput, the quantity being maximized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slot_distance_sq, Assignment, Point, SystemParams, Trajectory, UserSet};

/// Per-user throughput over one period, in bits/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub per_user: Vec<f64>,
    pub min_value: f64,
    pub argmin_user: usize,
}

/// Free-space capacity in slot `n` toward `user`, bits/s/Hz.
pub fn capacity(traj: &Trajectory, n: isize, user: Point, params: &SystemParams) -> f64 {
    capacity_at_distance_sq(slot_distance_sq(traj, n, user, params.altitude), params)
}

pub fn capacity_at_distance_sq(d_sq: f64, params: &SystemParams) -> f64 {
    (params.comm_snr_gain() / d_sq).ln_1p() / std::f64::consts::LN_2
}

pub fn throughput(
    traj: &Trajectory,
    assign: &Assignment,
    users: &UserSet,
    params: &SystemParams,
) -> Result<ThroughputReport> {
    if assign.users() != users.len() || assign.slots() != traj.len() {
        return Err(Error::DimensionMismatch(format!(
            "assignment is {}x{} but trajectory has {} slots and there are {} users",
            assign.slots(),
            assign.users(),
            traj.len(),
            users.len()
        )));
    }
    let per_user: Vec<f64> = users
        .positions
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            (0..traj.len())
                .map(|n| assign.get(n, k) * params.delta * capacity(traj, n as isize, w, params))
                .sum()
        })
        .collect();
    let (argmin_user, min_value) = per_user
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best });
    Ok(ThroughputReport { per_user, min_value, argmin_user })
}
