//! Concave lower bound of the per-user throughput around a local point.

use crate::comm::capacity_at_distance_sq;
use crate::error::{Error, Result};
use crate::model::{Assignment, Point, SystemParams, Trajectory, UserSet};
use crate::sensing::DeploymentRegion;

use super::LocalPoint;

/// One term per (slot, user):
/// `f = -(A1 / (2 A3)) a² - (A1 A3 / 2) D² + A2 a`, with `D` the squared
/// UAV-user distance.
///
/// Terms whose local assignment is zero use the linear bound
/// `a * delta * R(D_max)`, stored as `A1 = A3 = 0` and `A2 = delta * R(D_max)`,
/// where `D_max` is the largest squared distance from the user to the
/// deployment region. It only bounds the throughput for trajectories inside
/// that region.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSurrogate {
    slots: usize,
    users: Vec<Point>,
    altitude: f64,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// Row-major `[n * K + k]`.
    pub terms: Vec<f64>,
    pub per_user: Vec<f64>,
    pub min_value: f64,
    pub argmin_user: usize,
}

/// Value, gradient and Hessian of one term in `(x_n, y_n, a_{n,k})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermDerivs {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

pub fn build_objective_surrogate(
    local: &LocalPoint,
    users: &UserSet,
    params: &SystemParams,
    omega: &DeploymentRegion,
) -> Result<ObjectiveSurrogate> {
    let (n_slots, k_users) = (local.traj.len(), users.len());
    if local.assign.slots() != n_slots || local.assign.users() != k_users {
        return Err(Error::DimensionMismatch("local assignment does not match trajectory and users".into()));
    }
    let h2 = params.altitude * params.altitude;
    let gamma = params.comm_snr_gain();
    let mut a1 = Vec::with_capacity(n_slots * k_users);
    let mut a2 = Vec::with_capacity(n_slots * k_users);
    let mut a3 = Vec::with_capacity(n_slots * k_users);
    for n in 0..n_slots {
        let p = local.traj.point(n as isize);
        for (k, w) in users.positions.iter().enumerate() {
            let ar = local.assign.get(n, k);
            if ar > 0.0 {
                let dr = p.dist_sq(w) + h2;
                let c1 = params.delta * gamma / (std::f64::consts::LN_2 * dr * (dr + gamma));
                a1.push(c1);
                a2.push(params.delta * capacity_at_distance_sq(dr, params) + c1 * dr);
                a3.push(ar / dr);
            } else {
                let far = omega.max_distance_from(*w);
                a1.push(0.0);
                a2.push(params.delta * capacity_at_distance_sq(far * far + h2, params));
                a3.push(0.0);
            }
        }
    }
    Ok(ObjectiveSurrogate { slots: n_slots, users: users.positions.clone(), altitude: params.altitude, a1, a2, a3 })
}

impl ObjectiveSurrogate {
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn users(&self) -> usize {
        self.users.len()
    }

    /// `(A1, A2, A3)` of term `(n, k)`.
    pub fn coefficients(&self, n: usize, k: usize) -> (f64, f64, f64) {
        let i = n * self.users.len() + k;
        (self.a1[i], self.a2[i], self.a3[i])
    }

    /// Coefficients of `a²` and `D²`, both nonnegative.
    fn curvature(&self, i: usize) -> (f64, f64) {
        if self.a3[i] > 0.0 {
            (self.a1[i] / (2.0 * self.a3[i]), self.a1[i] * self.a3[i] / 2.0)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn term(&self, n: usize, k: usize, x: f64, y: f64, a: f64) -> f64 {
        self.term_derivs(n, k, x, y, a).value
    }

    pub fn term_derivs(&self, n: usize, k: usize, x: f64, y: f64, a: f64) -> TermDerivs {
        let i = n * self.users.len() + k;
        let (qa, qd) = self.curvature(i);
        let w = self.users[k];
        let (dx, dy) = (x - w.x, y - w.y);
        let d = dx * dx + dy * dy + self.altitude * self.altitude;
        let value = -qa * a * a - qd * d * d + self.a2[i] * a;
        let grad = [-4.0 * qd * d * dx, -4.0 * qd * d * dy, -2.0 * qa * a + self.a2[i]];
        let hxy = -8.0 * qd * dx * dy;
        let hess = [
            [-4.0 * qd * (2.0 * dx * dx + d), hxy, 0.0],
            [hxy, -4.0 * qd * (2.0 * dy * dy + d), 0.0],
            [0.0, 0.0, -2.0 * qa],
        ];
        TermDerivs { value, grad, hess }
    }

    pub fn evaluate(&self, traj: &Trajectory, assign: &Assignment) -> ObjectiveEval {
        let k_users = self.users.len();
        let mut terms = Vec::with_capacity(self.slots * k_users);
        let mut per_user = vec![0.0; k_users];
        for n in 0..self.slots {
            for k in 0..k_users {
                let v = self.term(n, k, traj.x[n], traj.y[n], assign.get(n, k));
                terms.push(v);
                per_user[k] += v;
            }
        }
        let (argmin_user, min_value) = per_user
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (k, v)| if v < b.1 { (k, v) } else { b });
        ObjectiveEval { terms, per_user, min_value, argmin_user }
    }

    /// Gradient of user `k`'s summed surrogate: `(d/dx, d/dy, d/da_{.,k})`.
    pub fn user_gradient(&self, k: usize, traj: &Trajectory, assign: &Assignment) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut gx = vec![0.0; self.slots];
        let mut gy = vec![0.0; self.slots];
        let mut ga = vec![0.0; self.slots];
        for n in 0..self.slots {
            let d = self.term_derivs(n, k, traj.x[n], traj.y[n], assign.get(n, k));
            gx[n] = d.grad[0];
            gy[n] = d.grad[1];
            ga[n] = d.grad[2];
        }
        (gx, gy, ga)
    }
}
