//! Echo SNR, the detection-driven deployment region, and the exact
//! localization CRB of a ranging window together with its gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    slot_distance_sq, DetectionSpec, Disc, Point, SensingRegion, SystemParams, Trajectory,
};
use crate::solver::barrier::{self, BarrierOptions, BarrierProblem};

/// Entries of the 2x2 Fisher information matrix of a target position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaTerms {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
}

impl ThetaTerms {
    pub fn trace(&self) -> f64 {
        self.theta_a + self.theta_b
    }

    pub fn det(&self) -> f64 {
        self.theta_a * self.theta_b - self.theta_c * self.theta_c
    }

    /// Singular when the determinant is negligible relative to the trace.
    pub fn is_singular(&self) -> bool {
        let tr = self.trace();
        !(self.det() > 1e-15 * tr * tr)
    }
}

/// Echo SNR of a target at `s` seen from slot `n`; two-way path loss.
pub fn echo_snr(traj: &Trajectory, n: isize, s: Point, params: &SystemParams) -> f64 {
    echo_snr_at_distance_sq(slot_distance_sq(traj, n, s, params.altitude), params)
}

pub fn echo_snr_at_distance_sq(d_sq: f64, params: &SystemParams) -> f64 {
    params.echo_snr_gain() / (d_sq * d_sq)
}

/// Largest horizontal distance at which the detection SNR is still met.
pub fn detection_radius(params: &SystemParams) -> Result<f64> {
    match params.detection {
        DetectionSpec::Radius(r) => Ok(r),
        DetectionSpec::SnrThreshold(xi_d) => {
            let h2 = params.altitude * params.altitude;
            let slack = (params.echo_snr_gain() / xi_d).sqrt() - h2;
            if slack < -1e-12 * h2 {
                return Err(Error::DetectionInfeasible(format!(
                    "SNR threshold {xi_d} cannot be met even directly above a target at {} m",
                    params.altitude
                )));
            }
            Ok(slack.max(0.0).sqrt())
        }
    }
}

/// Admissible UAV positions: the intersection of the listed discs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentRegion {
    pub constraints: Vec<Disc>,
}

impl DeploymentRegion {
    pub fn contains(&self, p: Point) -> bool {
        self.constraints.iter().all(|d| d.contains(p))
    }

    /// Signed distance to the boundary; positive inside.
    pub fn slack(&self, p: Point) -> f64 {
        self.constraints
            .iter()
            .map(|d| d.radius - p.dist(&d.center))
            .fold(f64::INFINITY, f64::min)
    }

    /// Center and radius of the largest disc inscribed in the region.
    /// A negative radius means the region is empty.
    pub fn inner_center(&self) -> (Point, f64) {
        if let [d] = self.constraints.as_slice() {
            return (d.center, d.radius);
        }
        let n = self.constraints.len() as f64;
        let c0 = Point::new(
            self.constraints.iter().map(|d| d.center.x).sum::<f64>() / n,
            self.constraints.iter().map(|d| d.center.y).sum::<f64>() / n,
        );
        let problem = InscribedDisc { discs: &self.constraints };
        let r0 = self.slack(c0) - 1.0;
        let opts = BarrierOptions { gap_tol: 1e-10, ..BarrierOptions::default() };
        let z = match barrier::minimize(&problem, &[c0.x, c0.y, r0], None, &opts) {
            Ok(sol) => sol.z,
            Err(e) => e.best_point().map(|z| z.to_vec()).unwrap_or(vec![c0.x, c0.y, r0]),
        };
        let p = Point::new(z[0], z[1]);
        (p, self.slack(p))
    }

    /// Largest `t >= 0` with `origin + t * dir` inside every disc; `origin` must be inside.
    pub fn ray_extent(&self, origin: Point, dir: (f64, f64)) -> f64 {
        let norm = dir.0.hypot(dir.1);
        let (ux, uy) = (dir.0 / norm, dir.1 / norm);
        self.constraints
            .iter()
            .map(|d| {
                let ox = origin.x - d.center.x;
                let oy = origin.y - d.center.y;
                let b = ox * ux + oy * uy;
                let c = ox * ox + oy * oy - d.radius * d.radius;
                let disc = (b * b - c).max(0.0);
                (-b + disc.sqrt()).max(0.0) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed polyline along the region boundary, for plotting.
    pub fn boundary(&self, samples: usize) -> Vec<Point> {
        let (c, _) = self.inner_center();
        (0..samples)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / samples as f64;
                let dir = (th.cos(), th.sin());
                let t = self.ray_extent(c, dir);
                Point::new(c.x + t * dir.0, c.y + t * dir.1)
            })
            .collect()
    }

    /// Upper bound on the distance from `w` to any point of the region.
    pub fn max_distance_from(&self, w: Point) -> f64 {
        self.constraints
            .iter()
            .map(|d| w.dist(&d.center) + d.radius)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Positions from which every point of every disc in `region` is within `dbar0`.
pub fn deployment_region(region: &SensingRegion, dbar0: f64) -> Result<DeploymentRegion> {
    if !(dbar0 > 0.0) {
        return Err(Error::InvalidParams(format!("detection radius must be positive, got {dbar0}")));
    }
    let constraints = region
        .discs
        .iter()
        .map(|d| {
            let radius = dbar0 - d.radius;
            if radius < 0.0 {
                Err(Error::EmptyDeploymentRegion(format!(
                    "disc of radius {} exceeds the detection radius {dbar0}",
                    d.radius
                )))
            } else {
                Ok(Disc { center: d.center, radius })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let omega = DeploymentRegion { constraints };
    let (_, r) = omega.inner_center();
    let scale = omega.constraints.iter().map(|d| d.radius).fold(1.0, f64::max);
    if r < -1e-6 * scale {
        return Err(Error::EmptyDeploymentRegion("constraint discs do not intersect".into()));
    }
    Ok(omega)
}

/// Deployment region for the detection requirement in `params`.
pub fn deployment_region_for(params: &SystemParams, region: &SensingRegion) -> Result<DeploymentRegion> {
    deployment_region(region, detection_radius(params)?)
}

/// Per-slot FIM weight `eta / d^6 + 8 / d^4` as a function of `d²`.
pub(crate) fn fim_weight(d_sq: f64, eta: f64) -> f64 {
    let d4 = d_sq * d_sq;
    eta / (d4 * d_sq) + 8.0 / d4
}

fn fim_weight_deriv(d_sq: f64, eta: f64) -> f64 {
    let d4 = d_sq * d_sq;
    -3.0 * eta / (d4 * d4) - 16.0 / (d4 * d_sq)
}

/// FIM entries for a request starting in slot `m`; the window wraps periodically.
pub fn theta_terms(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> ThetaTerms {
    let h2 = params.altitude * params.altitude;
    let mut t = ThetaTerms { theta_a: 0.0, theta_b: 0.0, theta_c: 0.0 };
    for n in traj.window(m, params.window) {
        let dx = traj.x[n] - s.x;
        let dy = traj.y[n] - s.y;
        let w = fim_weight(dx * dx + dy * dy + h2, params.eta);
        t.theta_a += w * dx * dx;
        t.theta_b += w * dy * dy;
        t.theta_c += w * dx * dy;
    }
    t
}

/// Trace of the inverse FIM (m²).
pub fn crb(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> Result<f64> {
    let t = theta_terms(traj, m, s, params);
    if t.is_singular() {
        return Err(Error::SingularFim);
    }
    Ok(t.trace() / t.det())
}

/// CRB with singular windows mapped to `+inf`.
pub fn crb_or_inf(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> f64 {
    crb(traj, m, s, params).unwrap_or(f64::INFINITY)
}

/// Gradient of the CRB with respect to every waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbGradient {
    pub value: f64,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

pub fn crb_gradient(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> Result<CrbGradient> {
    let t = theta_terms(traj, m, s, params);
    if t.is_singular() {
        return Err(Error::SingularFim);
    }
    let (tr, det) = (t.trace(), t.det());
    let h2 = params.altitude * params.altitude;
    let mut gx = vec![0.0; traj.len()];
    let mut gy = vec![0.0; traj.len()];
    for n in traj.window(m, params.window) {
        let dx = traj.x[n] - s.x;
        let dy = traj.y[n] - s.y;
        let d_sq = dx * dx + dy * dy + h2;
        let w = fim_weight(d_sq, params.eta);
        let wp = fim_weight_deriv(d_sq, params.eta);
        // d/dx and d/dy of the per-slot (a, b, c) contributions.
        let da = (2.0 * wp * dx * dx * dx + 2.0 * w * dx, 2.0 * wp * dy * dx * dx);
        let db = (2.0 * wp * dx * dy * dy, 2.0 * wp * dy * dy * dy + 2.0 * w * dy);
        let dc = (2.0 * wp * dx * dx * dy + w * dy, 2.0 * wp * dy * dx * dy + w * dx);
        for (g, (a, b, c)) in [(&mut gx[n], (da.0, db.0, dc.0)), (&mut gy[n], (da.1, db.1, dc.1))] {
            let dtr = a + b;
            let ddet = a * t.theta_b + t.theta_a * b - 2.0 * t.theta_c * c;
            *g += (dtr * det - tr * ddet) / (det * det);
        }
    }
    Ok(CrbGradient { value: tr / det, dx: gx, dy: gy })
}

/// Worst CRB over all windows and targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbPeak {
    pub value: f64,
    pub window: usize,
    pub target: usize,
}

pub fn max_crb(traj: &Trajectory, params: &SystemParams, targets: &[Point]) -> Option<CrbPeak> {
    let mut best: Option<CrbPeak> = None;
    for (i, &s) in targets.iter().enumerate() {
        for m in 0..traj.len() {
            let v = crb_or_inf(traj, m as isize, s, params);
            if best.is_none_or(|b| v > b.value) {
                best = Some(CrbPeak { value: v, window: m, target: i });
            }
        }
    }
    best
}

/// Worst CRB over all request start slots for one target.
pub fn worst_window_crb(traj: &Trajectory, s: Point, params: &SystemParams) -> f64 {
    (0..traj.len() as isize)
        .map(|m| crb_or_inf(traj, m, s, params))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `trace(J) - xi * det(J)`; negative exactly when the CRB is below `xi`
/// on a nonsingular window.
pub fn localization_margin(traj: &Trajectory, m: isize, s: Point, params: &SystemParams) -> f64 {
    let t = theta_terms(traj, m, s, params);
    if t.is_singular() {
        return t.trace();
    }
    t.trace() - params.crb_limit * t.det()
}

/// Largest localization margin over all windows and targets (`-inf` with no targets).
pub fn max_localization_margin(traj: &Trajectory, params: &SystemParams, targets: &[Point]) -> f64 {
    if params.crb_limit.is_infinite() {
        return f64::NEG_INFINITY;
    }
    targets
        .iter()
        .flat_map(|&s| (0..traj.len() as isize).map(move |m| (m, s)))
        .map(|(m, s)| localization_margin(traj, m, s, params))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Chebyshev-center problem over variables `(px, py, r)`: maximize `r` with
/// `|p - c_i| + r <= R_i`.
struct InscribedDisc<'a> {
    discs: &'a [Disc],
}

const CENTER_SMOOTHING: f64 = 1e-9;

impl BarrierProblem for InscribedDisc<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn num_constraints(&self) -> usize {
        self.discs.len()
    }

    fn cost(&self) -> &[f64] {
        &[0.0, 0.0, -1.0]
    }

    fn constraint_values(&self, z: &[f64], out: &mut [f64]) -> bool {
        for (o, d) in out.iter_mut().zip(self.discs) {
            let q = (z[0] - d.center.x).powi(2) + (z[1] - d.center.y).powi(2) + CENTER_SMOOTHING;
            *o = q.sqrt() + z[2] - d.radius;
        }
        true
    }

    fn add_barrier_terms(&self, z: &[f64], values: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        for (&g, d) in values.iter().zip(self.discs) {
            let ex = z[0] - d.center.x;
            let ey = z[1] - d.center.y;
            let rho = (ex * ex + ey * ey + CENTER_SMOOTHING).sqrt();
            let dg = [ex / rho, ey / rho, 1.0];
            let r3 = rho * rho * rho;
            let d2 = [[1.0 / rho - ex * ex / r3, -ex * ey / r3], [-ex * ey / r3, 1.0 / rho - ey * ey / r3]];
            let w = -1.0 / g;
            for i in 0..3 {
                grad[i] += w * dg[i];
                for j in 0..3 {
                    hess[(i, j)] += w * w * dg[i] * dg[j];
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    hess[(i, j)] += w * d2[i][j];
                }
            }
        }
    }
}
