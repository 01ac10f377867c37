//! The fixed problem shapes solved in each outer iteration, stated over
//! `z = [x (N), y (N), a (N*K, row-major), t]`.

use nalgebra::{DMatrix, DVector};

use super::barrier::{minimize, BarrierError, BarrierOptions, BarrierProblem, BarrierSolution};
use super::SolverError;
use crate::model::{Assignment, SystemParams, Trajectory};
use crate::sca::{LocalPoint, ObjectiveSurrogate, SparseDerivs, TargetSurrogate};
use crate::sensing::DeploymentRegion;

/// Default bound on constraint violations of returned points.
pub const FEAS_TOL: f64 = 1e-8;

/// `sum coeffs * z <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub traj: Trajectory,
    /// `None` for problems without scheduling variables.
    pub assign: Option<Assignment>,
    /// Value of the epigraph variable (maximized for scheduling problems,
    /// minimized for the feasibility problem).
    pub objective: f64,
    /// Largest positive constraint value at the returned point.
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// How the CRB surrogates enter the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CrbMode {
    /// `g1 - xi g2 <= 0`.
    Constraint,
    /// `g1 - xi g2 <= t`, minimizing `t`.
    Epigraph,
}

struct Subproblem<'a> {
    n: usize,
    k: usize,
    cost: Vec<f64>,
    step_sq: f64,
    omega: &'a DeploymentRegion,
    objective: Option<&'a ObjectiveSurrogate>,
    crb: &'a [TargetSurrogate],
    crb_mode: CrbMode,
    linear: Vec<LinearConstraint>,
}

impl Subproblem<'_> {
    fn t_index(&self) -> usize {
        2 * self.n + self.n * self.k
    }

    fn a_index(&self, n: usize, k: usize) -> usize {
        2 * self.n + n * self.k + k
    }

    fn num_speed(&self) -> usize {
        if self.n > 1 { self.n } else { 0 }
    }

    fn traj(&self, z: &[f64]) -> Trajectory {
        Trajectory { x: z[..self.n].to_vec(), y: z[self.n..2 * self.n].to_vec() }
    }

    fn crb_rows(&self) -> usize {
        self.crb.len() * self.n
    }
}

/// Adds `w ∇g ∇gᵀ + ... ` for a constraint with sparse derivatives.
fn add_block(
    vars: &[usize],
    g: f64,
    grad_g: &[f64],
    hess_g: impl Fn(usize, usize) -> f64,
    grad: &mut DVector<f64>,
    hess: &mut DMatrix<f64>,
) {
    let w = -1.0 / g;
    for (i, &vi) in vars.iter().enumerate() {
        grad[vi] += w * grad_g[i];
        for (j, &vj) in vars.iter().enumerate() {
            hess[(vi, vj)] += w * w * grad_g[i] * grad_g[j] + w * hess_g(i, j);
        }
    }
}

impl BarrierProblem for Subproblem<'_> {
    fn dim(&self) -> usize {
        self.t_index() + 1
    }

    fn num_constraints(&self) -> usize {
        self.linear.len()
            + self.num_speed()
            + self.n * self.omega.constraints.len()
            + if self.objective.is_some() { self.k } else { 0 }
            + self.crb_rows()
    }

    fn cost(&self) -> &[f64] {
        &self.cost
    }

    fn constraint_values(&self, z: &[f64], out: &mut [f64]) -> bool {
        let n = self.n;
        let mut i = 0;
        for c in &self.linear {
            out[i] = c.coeffs.iter().map(|&(j, v)| v * z[j]).sum::<f64>() - c.rhs;
            i += 1;
        }
        for s in 0..self.num_speed() {
            let s1 = (s + 1) % n;
            out[i] = (z[s1] - z[s]).powi(2) + (z[n + s1] - z[n + s]).powi(2) - self.step_sq;
            i += 1;
        }
        for d in &self.omega.constraints {
            for s in 0..n {
                out[i] = (z[s] - d.center.x).powi(2) + (z[n + s] - d.center.y).powi(2) - d.radius * d.radius;
                i += 1;
            }
        }
        let t = z[self.t_index()];
        if let Some(obj) = self.objective {
            for k in 0..self.k {
                let total: f64 = (0..n).map(|s| obj.term(s, k, z[s], z[n + s], z[self.a_index(s, k)])).sum();
                out[i] = t - total;
                i += 1;
            }
        }
        if !self.crb.is_empty() {
            let traj = self.traj(z);
            for sur in self.crb {
                let Ok(vals) = sur.constraint_values(&traj) else { return false };
                for v in vals {
                    out[i] = if self.crb_mode == CrbMode::Epigraph { v - t } else { v };
                    i += 1;
                }
            }
        }
        debug_assert_eq!(i, out.len());
        out.iter().all(|v| v.is_finite())
    }

    fn add_barrier_terms(&self, z: &[f64], values: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let n = self.n;
        let mut i = 0;
        for c in &self.linear {
            let w = -1.0 / values[i];
            for &(a, va) in &c.coeffs {
                grad[a] += w * va;
                for &(b, vb) in &c.coeffs {
                    hess[(a, b)] += w * w * va * vb;
                }
            }
            i += 1;
        }
        for s in 0..self.num_speed() {
            let s1 = (s + 1) % n;
            let (ex, ey) = (z[s1] - z[s], z[n + s1] - z[n + s]);
            let vars = [s, s1, n + s, n + s1];
            let g = [-2.0 * ex, 2.0 * ex, -2.0 * ey, 2.0 * ey];
            let h = |a: usize, b: usize| {
                let same_axis = (a < 2) == (b < 2);
                if !same_axis {
                    0.0
                } else if a == b {
                    2.0
                } else {
                    -2.0
                }
            };
            add_block(&vars, values[i], &g, h, grad, hess);
            i += 1;
        }
        for d in &self.omega.constraints {
            for s in 0..n {
                let vars = [s, n + s];
                let g = [2.0 * (z[s] - d.center.x), 2.0 * (z[n + s] - d.center.y)];
                add_block(&vars, values[i], &g, |a, b| if a == b { 2.0 } else { 0.0 }, grad, hess);
                i += 1;
            }
        }
        let ti = self.t_index();
        if let Some(obj) = self.objective {
            for k in 0..self.k {
                // g = t - sum_n f_{n,k}; blocks per slot share the t entry.
                let mut vars = Vec::with_capacity(3 * n + 1);
                let mut g = Vec::with_capacity(3 * n + 1);
                let mut blocks = Vec::with_capacity(n);
                for s in 0..n {
                    let d = obj.term_derivs(s, k, z[s], z[n + s], z[self.a_index(s, k)]);
                    vars.extend([s, n + s, self.a_index(s, k)]);
                    g.extend(d.grad.iter().map(|v| -v));
                    blocks.push(d.hess);
                }
                vars.push(ti);
                g.push(1.0);
                let h = |a: usize, b: usize| {
                    if a / 3 == b / 3 && a < 3 * n && b < 3 * n {
                        -blocks[a / 3][a % 3][b % 3]
                    } else {
                        0.0
                    }
                };
                add_block(&vars, values[i], &g, h, grad, hess);
                i += 1;
            }
        }
        if !self.crb.is_empty() {
            let traj = self.traj(z);
            for sur in self.crb {
                let blocks = sur.constraint_derivs(&traj).expect("interior point lies in the surrogate domain");
                for b in blocks {
                    let SparseDerivs { vars, grad: g, hess: h, .. } = b;
                    if self.crb_mode == CrbMode::Epigraph {
                        let mut vars = vars;
                        let mut g = g;
                        vars.push(ti);
                        g.push(-1.0);
                        let q = h.nrows();
                        add_block(&vars, values[i], &g, |a, b| if a < q && b < q { h[(a, b)] } else { 0.0 }, grad, hess);
                    } else {
                        add_block(&vars, values[i], &g, |a, b| h[(a, b)], grad, hess);
                    }
                    i += 1;
                }
            }
        }
    }
}

/// Basis of the directions that keep every schedule row on the simplex.
fn simplex_null_basis(n: usize, k: usize) -> DMatrix<f64> {
    let dim = 2 * n + n * k + 1;
    let cols = 2 * n + n * (k - 1) + 1;
    let mut b = DMatrix::zeros(dim, cols);
    for i in 0..2 * n {
        b[(i, i)] = 1.0;
    }
    let mut c = 2 * n;
    for s in 0..n {
        for j in 0..k - 1 {
            b[(2 * n + s * k + j, c)] = 1.0;
            b[(2 * n + s * k + k - 1, c)] = -1.0;
            c += 1;
        }
    }
    b[(dim - 1, cols - 1)] = 1.0;
    b
}

fn nonnegative_schedule(n: usize, k: usize) -> Vec<LinearConstraint> {
    (0..n * k).map(|i| LinearConstraint { coeffs: vec![(2 * n + i, -1.0)], rhs: 0.0 }).collect()
}

fn finish(problem: &Subproblem, result: Result<BarrierSolution, BarrierError>) -> Result<SolveReport, SolverError> {
    let to_report = |sol: &BarrierSolution| {
        let n = problem.n;
        let assign = (problem.k > 0).then(|| {
            let mut a = sol.z[2 * n..2 * n + n * problem.k].to_vec();
            // Clean rounding drift off the simplex rows.
            for row in a.chunks_mut(problem.k) {
                let s: f64 = row.iter().map(|v| v.max(0.0)).sum();
                row.iter_mut().for_each(|v| *v = v.max(0.0) / s);
            }
            Assignment::new(n, problem.k, a).expect("rows are normalized")
        });
        SolveReport {
            traj: problem.traj(&sol.z),
            assign,
            objective: sol.z[problem.t_index()],
            max_violation: sol.max_constraint.max(0.0),
            iterations: sol.newton_steps,
            converged: sol.converged,
        }
    };
    match result {
        Ok(sol) => Ok(to_report(&sol)),
        Err(BarrierError::Stalled { best }) => Err(SolverError::NumericalFailure { best: Box::new(to_report(&best)) }),
        Err(BarrierError::InfeasibleStart { max_violation }) => Err(SolverError::InfeasibleStart { max_violation }),
    }
}

fn start_vector(traj: &Trajectory, assign: Option<&Assignment>, t: f64) -> Vec<f64> {
    let mut z = traj.x.clone();
    z.extend(&traj.y);
    if let Some(a) = assign {
        z.extend(a.as_slice());
    }
    z.push(t);
    z
}

/// Maximizes the minimum surrogate throughput subject to the CRB
/// restrictions, speed, region and schedule constraints. The local point
/// must be strictly feasible.
pub fn solve_scheduling(
    local: &LocalPoint,
    objective: &ObjectiveSurrogate,
    crb: &[TargetSurrogate],
    linear_traj: &[LinearConstraint],
    params: &SystemParams,
    omega: &DeploymentRegion,
    opts: &BarrierOptions,
) -> Result<SolveReport, SolverError> {
    let n = local.traj.len();
    let k = local.assign.users();
    let mut cost = vec![0.0; 2 * n + n * k + 1];
    cost[2 * n + n * k] = -1.0;
    let mut linear = nonnegative_schedule(n, k);
    linear.extend(linear_traj.iter().cloned());
    let crb = if params.crb_limit.is_finite() { crb } else { &[] };
    let problem = Subproblem {
        n,
        k,
        cost,
        step_sq: params.step_limit().powi(2),
        omega,
        objective: Some(objective),
        crb,
        crb_mode: CrbMode::Constraint,
        linear,
    };
    let f0 = objective.evaluate(&local.traj, &local.assign).min_value;
    let t0 = f0 - 1e-3 * (1.0 + f0.abs());
    let z0 = start_vector(&local.traj, Some(&local.assign), t0);
    let basis = simplex_null_basis(n, k);
    finish(&problem, minimize(&problem, &z0, Some(&basis), opts))
}

/// Minimizes the largest CRB restriction `g1 - xi g2` over all windows and
/// targets, subject to speed and region constraints.
pub fn solve_feasibility(
    local: &Trajectory,
    crb: &[TargetSurrogate],
    params: &SystemParams,
    omega: &DeploymentRegion,
    opts: &BarrierOptions,
) -> Result<SolveReport, SolverError> {
    let n = local.len();
    let mut cost = vec![0.0; 2 * n + 1];
    cost[2 * n] = 1.0;
    let problem = Subproblem {
        n,
        k: 0,
        cost,
        step_sq: params.step_limit().powi(2),
        omega,
        objective: None,
        crb,
        crb_mode: CrbMode::Epigraph,
        linear: Vec::new(),
    };
    let worst = crb
        .iter()
        .filter_map(|s| s.constraint_values(local).ok())
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max);
    let t0 = worst + 1e-3 * (1.0 + worst.abs());
    let z0 = start_vector(local, None, t0);
    finish(&problem, minimize(&problem, &z0, None, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::throughput;
    use crate::model::{Point, SensingRegion, UserSet};
    use crate::sca::build_objective_surrogate;
    use crate::sensing::{deployment_region, max_crb, max_localization_margin};

    struct Toy {
        params: SystemParams,
        users: UserSet,
        omega: DeploymentRegion,
        targets: Vec<Point>,
        local: LocalPoint,
    }

    fn toy(slots: usize, xi: f64) -> Toy {
        let mut params = SystemParams::reference().with_crb_limit(xi);
        params.slots = slots;
        params.delta = params.period / slots as f64;
        let users = UserSet::new(vec![Point::new(-160.0, 150.0), Point::new(140.0, 170.0), Point::new(180.0, -60.0)]).unwrap();
        let region = SensingRegion::disc(Point::new(0.0, 0.0), 50.0).unwrap();
        let omega = deployment_region(&region, 250.0).unwrap();
        let radius = 0.95 * (params.step_limit() / (2.0 * (std::f64::consts::PI / slots as f64).sin())).min(200.0);
        let traj = Trajectory::circle(Point::new(0.0, 0.0), radius, slots, 0.0);
        let targets = vec![Point::new(0.0, 0.0), Point::new(30.0, -20.0), Point::new(-40.0, 10.0)];
        let local = LocalPoint::new(traj, Assignment::uniform(slots, 3));
        Toy { params, users, omega, targets, local }
    }

    #[test]
    fn scheduling_step_improves_and_stays_feasible() {
        let t = toy(25, 10.0);
        assert!(max_crb(&t.local.traj, &t.params, &t.targets).unwrap().value < 10.0);
        let obj = build_objective_surrogate(&t.local, &t.users, &t.params, &t.omega).unwrap();
        let crb: Vec<_> = t.targets.iter().map(|&s| TargetSurrogate::build(&t.local.traj, s, &t.params)).collect();
        let r = solve_scheduling(&t.local, &obj, &crb, &[], &t.params, &t.omega, &BarrierOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.max_violation <= FEAS_TOL);
        let a = r.assign.clone().unwrap();
        let before = throughput(&t.local.traj, &t.local.assign, &t.users, &t.params).unwrap().min_value;
        let after = throughput(&r.traj, &a, &t.users, &t.params).unwrap().min_value;
        assert!(after >= before - 1e-6, "{after} < {before}");
        assert!(after >= r.objective - 1e-6);
        assert!(crate::model::speed_feasible(&r.traj, &t.params));
        assert!(r.traj.points().all(|p| t.omega.contains(p)));
        assert!(max_crb(&r.traj, &t.params, &t.targets).unwrap().value <= 10.0 + 1e-6);
        assert!(a.simplex_violation() <= 1e-12);
    }

    #[test]
    fn unconstrained_localization_skips_surrogates() {
        let t = toy(12, f64::INFINITY);
        let obj = build_objective_surrogate(&t.local, &t.users, &t.params, &t.omega).unwrap();
        let crb: Vec<_> = t.targets.iter().map(|&s| TargetSurrogate::build(&t.local.traj, s, &t.params)).collect();
        let r = solve_scheduling(&t.local, &obj, &crb, &[], &t.params, &t.omega, &BarrierOptions::default()).unwrap();
        assert!(r.converged);
    }

    #[test]
    fn feasibility_step_reduces_margin() {
        let t = toy(25, 1.0);
        let crb: Vec<_> = t.targets.iter().map(|&s| TargetSurrogate::build(&t.local.traj, s, &t.params)).collect();
        let before = max_localization_margin(&t.local.traj, &t.params, &t.targets);
        let r = solve_feasibility(&t.local.traj, &crb, &t.params, &t.omega, &BarrierOptions::default()).unwrap();
        let after = max_localization_margin(&r.traj, &t.params, &t.targets);
        assert!(r.objective <= before + 1e-9);
        assert!(after <= r.objective + 1e-9 * r.objective.abs().max(1.0));
        assert!(after <= before);
    }

    #[test]
    fn infeasible_warm_start() {
        let t = toy(25, 10.0);
        let mut local = t.local.clone();
        local.traj.x[3] = 500.0;
        let obj = build_objective_surrogate(&local, &t.users, &t.params, &t.omega).unwrap();
        let r = solve_scheduling(&local, &obj, &[], &[], &t.params, &t.omega, &BarrierOptions::default());
        assert!(matches!(r, Err(SolverError::InfeasibleStart { .. })));
    }

    #[test]
    fn deterministic_solves() {
        let t = toy(10, 10.0);
        let obj = build_objective_surrogate(&t.local, &t.users, &t.params, &t.omega).unwrap();
        let crb: Vec<_> = t.targets.iter().map(|&s| TargetSurrogate::build(&t.local.traj, s, &t.params)).collect();
        let a = solve_scheduling(&t.local, &obj, &crb, &[], &t.params, &t.omega, &BarrierOptions::default()).unwrap();
        let b = solve_scheduling(&t.local, &obj, &crb, &[], &t.params, &t.omega, &BarrierOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn null_basis_preserves_rows() {
        let b = simplex_null_basis(3, 4);
        for c in 0..b.ncols() {
            for s in 0..3 {
                let row: f64 = (0..4).map(|k| b[(6 + s * 4 + k, c)]).sum();
                assert_eq!(row, 0.0);
            }
        }
        assert_eq!(b.ncols(), 6 + 9 + 1);
    }
}
