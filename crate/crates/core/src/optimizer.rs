//! Outer loops: feasibility search, the surrogate-based main loop, and the two
//! gradient benchmarks that linearize the CRB instead.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::comm::throughput;
use crate::error::{Error, Result};
use crate::model::{Assignment, Point, SensingRegion, SystemParams, Trajectory, UserSet};
use crate::sca::{build_objective_surrogate, LocalPoint, TargetSurrogate};
use crate::sensing::{crb_gradient, deployment_region_for, max_crb, max_localization_margin, DeploymentRegion};
use crate::solver::{solve_feasibility, solve_scheduling, BarrierOptions, LinearConstraint, SolveReport, SolverError, FEAS_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Relative objective improvement below which the outer loops stop.
    pub eps_out: f64,
    /// Absolute reduction of the feasibility objective below which the search gives up.
    pub eps_feasibility: f64,
    pub max_iterations: usize,
    pub max_feasibility_iterations: usize,
    /// Per-slot displacement of the fixed-step benchmark; `None` means `0.1 * step_limit`.
    pub fix_traj_step: Option<f64>,
    pub fix_assign_step: f64,
    pub adj_max_trials: usize,
    #[serde(skip)]
    pub barrier: BarrierOptions,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eps_out: 1e-4,
            eps_feasibility: 1e-4,
            max_iterations: 60,
            max_feasibility_iterations: 60,
            fix_traj_step: None,
            fix_assign_step: 0.02,
            adj_max_trials: 30,
            barrier: BarrierOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Proposed,
    Adj,
    Fix,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Proposed => "proposed",
            Scheme::Adj => "adj",
            Scheme::Fix => "fix",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "adj" => Ok(Scheme::Adj),
            "fix" => Ok(Scheme::Fix),
            _ => Err(Error::InvalidParams(format!("unknown scheme `{s}` (expected proposed, adj or fix)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Feasibility,
    Main,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Start,
    Adopted,
    /// Adopted although the exact CRB exceeds the limit at some reference point.
    Excursion,
    /// A candidate that was not adopted.
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// Feasibility reached at the exact CRB on every reference point.
    Feasible,
    IterationLimit,
    /// The candidate did not improve the exact objective.
    NoImprovement,
    /// No feasible improving step along the search direction.
    Interrupted,
    /// The fixed step produced an iterate that violates the CRB limit.
    Excursion,
    SolverFailure,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Feasible => "feasible",
            Termination::IterationLimit => "iteration_limit",
            Termination::NoImprovement => "no_improvement",
            Termination::Interrupted => "interrupted",
            Termination::Excursion => "excursion",
            Termination::SolverFailure => "solver_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub phase: Phase,
    /// Minimum user throughput in the main phase; the largest localization
    /// margin `Θa + Θb - ξ (ΘaΘb - Θc²)` in the feasibility phase.
    pub objective: f64,
    /// Largest exact CRB over all windows and reference points.
    pub max_crb: f64,
    pub violation: f64,
    pub seconds: f64,
    pub event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Option<Termination>,
}

impl RunTrace {
    pub const CSV_HEADER: &'static str = "iteration,phase,objective,max_crb,violation,seconds,event";

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: &RunTrace) {
        self.rows.extend(other.rows.iter().cloned());
    }

    /// Objective values of adopted main-phase rows, including the start.
    pub fn main_objectives(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.phase == Phase::Main && r.event != Event::Rejected)
            .map(|r| r.objective)
            .collect()
    }

    pub fn has_excursion(&self) -> bool {
        self.rows.iter().any(|r| r.event == Event::Excursion)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let phase = match r.phase {
                Phase::Feasibility => "feasibility",
                Phase::Main => "main",
            };
            let event = match r.event {
                Event::Start => "start",
                Event::Adopted => "adopted",
                Event::Excursion => "excursion",
                Event::Rejected => "rejected",
            };
            out.push_str(&format!(
                "{},{},{:.11e},{:.11e},{:.11e},{:.6},{}\n",
                r.iteration, phase, r.objective, r.max_crb, r.violation, r.seconds, event
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub traj: Trajectory,
    pub assign: Assignment,
    pub trace: RunTrace,
    pub termination: Termination,
}

/// Exact quantities recorded for an iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Exact {
    objective: f64,
    max_crb: f64,
    violation: f64,
}

impl Exact {
    fn crb_ok(&self, params: &SystemParams) -> bool {
        self.max_crb <= params.crb_limit
    }
}

/// Largest violation of the speed, region and CRB constraints at `refs`.
pub fn constraint_violation(traj: &Trajectory, params: &SystemParams, omega: &DeploymentRegion, refs: &[Point]) -> f64 {
    let step = params.step_limit();
    let n = traj.len();
    let speed = (0..n)
        .map(|i| traj.point(i as isize).dist(&traj.point(i as isize + 1)) - step)
        .fold(0.0, f64::max);
    let region = traj.points().map(|p| -omega.slack(p)).fold(0.0, f64::max);
    let crb = if params.crb_limit.is_finite() {
        max_crb(traj, params, refs).map_or(0.0, |p| p.value - params.crb_limit)
    } else {
        0.0
    };
    speed.max(region).max(crb).max(0.0)
}

fn exact_max_crb(traj: &Trajectory, params: &SystemParams, refs: &[Point]) -> f64 {
    max_crb(traj, params, refs).map_or(0.0, |p| p.value)
}

struct Context<'a> {
    params: &'a SystemParams,
    users: &'a UserSet,
    omega: DeploymentRegion,
    refs: &'a [Point],
    cfg: &'a OptimizerConfig,
    clock: Instant,
}

impl Context<'_> {
    fn exact(&self, traj: &Trajectory, assign: &Assignment) -> Result<Exact> {
        let objective = throughput(traj, assign, self.users, self.params)?.min_value;
        Ok(Exact {
            objective,
            max_crb: exact_max_crb(traj, self.params, self.refs),
            violation: constraint_violation(traj, self.params, &self.omega, self.refs),
        })
    }

    fn row(&self, iteration: usize, e: Exact, event: Event) -> TraceRow {
        TraceRow {
            iteration,
            phase: Phase::Main,
            objective: e.objective,
            max_crb: e.max_crb,
            violation: e.violation,
            seconds: self.clock.elapsed().as_secs_f64(),
            event,
        }
    }

    fn geometry_ok(&self, traj: &Trajectory) -> bool {
        let step = self.params.step_limit();
        traj.max_step_sq().sqrt() <= step + FEAS_TOL && traj.points().all(|p| self.omega.slack(p) >= -FEAS_TOL)
    }

    fn stalled(&self, old: f64, new: f64) -> bool {
        new - old < self.cfg.eps_out * old.abs().max(1e-12)
    }
}

/// Largest speed-feasible circle around the inscribed centre of `omega`, shrunk by 5%.
pub fn initial_trajectory(params: &SystemParams, omega: &DeploymentRegion) -> Trajectory {
    let n = params.slots;
    let (c, inner) = omega.inner_center();
    let chord = params.step_limit() / (2.0 * (std::f64::consts::PI / n as f64).sin());
    Trajectory::circle(c, 0.95 * chord.min(inner.max(0.0)), n, 0.0)
}

/// Moves the trajectory until every window meets the CRB limit at `refs`.
pub fn feasibility_phase(
    params: &SystemParams,
    region: &SensingRegion,
    refs: &[Point],
    cfg: &OptimizerConfig,
) -> Result<(Trajectory, RunTrace)> {
    let omega = deployment_region_for(params, region)?;
    let clock = Instant::now();
    let mut traj = initial_trajectory(params, &omega);
    let mut trace = RunTrace::default();
    let mut margin = max_localization_margin(&traj, params, refs);
    let row = |it: usize, traj: &Trajectory, margin: f64, event: Event| TraceRow {
        iteration: it,
        phase: Phase::Feasibility,
        objective: margin,
        max_crb: exact_max_crb(traj, params, refs),
        violation: constraint_violation(traj, params, &omega, refs),
        seconds: clock.elapsed().as_secs_f64(),
        event,
    };
    trace.push(row(0, &traj, margin, Event::Start));
    if margin < 0.0 {
        trace.termination = Some(Termination::Feasible);
        return Ok((traj, trace));
    }
    let (_, inner) = omega.inner_center();
    if inner <= 1e-9 {
        return Err(Error::Infeasible("deployment region has no interior and the fixed position misses the CRB limit".into()));
    }
    for it in 1..=cfg.max_feasibility_iterations {
        let surrogates: Vec<TargetSurrogate> = refs.iter().map(|&s| TargetSurrogate::build(&traj, s, params)).collect();
        let report = match solve_feasibility(&traj, &surrogates, params, &omega, &cfg.barrier) {
            Ok(r) => r,
            Err(SolverError::NumericalFailure { best }) => *best,
            Err(e) => return Err(e.into()),
        };
        let next = max_localization_margin(&report.traj, params, refs);
        if !(next < margin) {
            trace.push(row(it, &report.traj, next, Event::Rejected));
            return Err(Error::Infeasible(format!("localization margin stuck at {margin:e}")));
        }
        let reduction = margin - next;
        traj = report.traj;
        margin = next;
        trace.push(row(it, &traj, margin, Event::Adopted));
        if margin < 0.0 {
            trace.termination = Some(Termination::Feasible);
            return Ok((traj, trace));
        }
        if reduction < cfg.eps_feasibility {
            return Err(Error::Infeasible(format!("localization margin reduction {reduction:e} below threshold at {margin:e}")));
        }
    }
    Err(Error::Infeasible(format!(
        "no feasible trajectory after {} iterations (margin {margin:e})",
        cfg.max_feasibility_iterations
    )))
}

/// Pulls exact zeros of the schedule back inside so the next solve starts strictly feasible.
fn interior_schedule(a: Assignment) -> Assignment {
    if a.as_slice().iter().all(|&v| v > 0.0) {
        return a;
    }
    let k = a.users() as f64;
    let eps = 1e-12;
    let v = a.as_slice().iter().map(|&v| (1.0 - eps) * v + eps / k).collect();
    Assignment::new(a.slots(), a.users(), v).expect("convex combination of simplex rows")
}

fn check_start(ctx: &Context, init: &Trajectory) -> Result<()> {
    if init.len() != ctx.params.slots {
        return Err(Error::DimensionMismatch(format!("initial trajectory has {} slots, expected {}", init.len(), ctx.params.slots)));
    }
    if !ctx.geometry_ok(init) {
        return Err(Error::InvalidParams("initial trajectory violates the speed or region constraints".into()));
    }
    if ctx.params.crb_limit.is_finite() && !(exact_max_crb(init, ctx.params, ctx.refs) < ctx.params.crb_limit) {
        return Err(Error::InvalidParams("initial trajectory does not meet the CRB limit strictly".into()));
    }
    Ok(())
}

fn context<'a>(
    params: &'a SystemParams,
    users: &'a UserSet,
    region: &SensingRegion,
    refs: &'a [Point],
    cfg: &'a OptimizerConfig,
) -> Result<Context<'a>> {
    params.validate()?;
    let omega = deployment_region_for(params, region)?;
    Ok(Context { params, users, omega, refs, cfg, clock: Instant::now() })
}

/// Successive surrogate maximization of the minimum throughput from a CRB-feasible start.
pub fn optimize(
    params: &SystemParams,
    users: &UserSet,
    region: &SensingRegion,
    refs: &[Point],
    init: &Trajectory,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome> {
    let ctx = context(params, users, region, refs, cfg)?;
    check_start(&ctx, init)?;
    let mut traj = init.clone();
    let mut assign = Assignment::uniform(params.slots, users.len());
    let mut state = ctx.exact(&traj, &assign)?;
    let mut trace = RunTrace::default();
    trace.push(ctx.row(0, state, Event::Start));
    let mut termination = Termination::IterationLimit;
    for it in 1..=cfg.max_iterations {
        let local = LocalPoint::new(traj.clone(), assign.clone());
        let objective = build_objective_surrogate(&local, users, params, &ctx.omega)?;
        let surrogates: Vec<TargetSurrogate> = refs.iter().map(|&s| TargetSurrogate::build(&traj, s, params)).collect();
        let report = match solve_scheduling(&local, &objective, &surrogates, &[], params, &ctx.omega, &cfg.barrier) {
            Ok(r) => r,
            Err(SolverError::NumericalFailure { best }) => *best,
            Err(SolverError::InfeasibleStart { .. }) => {
                termination = Termination::SolverFailure;
                break;
            }
        };
        let Some((cand_traj, cand_assign)) = candidate(report) else {
            termination = Termination::SolverFailure;
            break;
        };
        let cand = ctx.exact(&cand_traj, &cand_assign)?;
        if !ctx.geometry_ok(&cand_traj) || !cand.crb_ok(params) || cand.objective < state.objective {
            trace.push(ctx.row(it, cand, Event::Rejected));
            termination = Termination::NoImprovement;
            break;
        }
        let stalled = ctx.stalled(state.objective, cand.objective);
        traj = cand_traj;
        assign = cand_assign;
        state = cand;
        trace.push(ctx.row(it, state, Event::Adopted));
        if stalled {
            termination = Termination::Converged;
            break;
        }
    }
    trace.termination = Some(termination);
    Ok(RunOutcome { traj, assign, trace, termination })
}

fn candidate(report: SolveReport) -> Option<(Trajectory, Assignment)> {
    let assign = interior_schedule(report.assign?);
    report.traj.x.iter().chain(&report.traj.y).all(|v| v.is_finite()).then_some((report.traj, assign))
}

/// First-order expansions `Φ(x) <= ξ` of every window CRB at `local`.
pub fn linearized_crb(local: &Trajectory, refs: &[Point], params: &SystemParams) -> Result<Vec<LinearConstraint>> {
    let n = local.len();
    let mut out = Vec::with_capacity(refs.len() * n);
    if !params.crb_limit.is_finite() {
        return Ok(out);
    }
    for &s in refs {
        for m in 0..n {
            let g = crb_gradient(local, m as isize, s, params)?;
            let mut coeffs = Vec::new();
            let mut rhs = params.crb_limit - g.value;
            for i in 0..n {
                if g.dx[i] != 0.0 || g.dy[i] != 0.0 {
                    coeffs.push((i, g.dx[i]));
                    coeffs.push((n + i, g.dy[i]));
                    rhs += g.dx[i] * local.x[i] + g.dy[i] * local.y[i];
                }
            }
            out.push(LinearConstraint { coeffs, rhs });
        }
    }
    Ok(out)
}

fn blend_traj(a: &Trajectory, b: &Trajectory, lam: f64) -> Trajectory {
    Trajectory {
        x: a.x.iter().zip(&b.x).map(|(u, v)| u + lam * (v - u)).collect(),
        y: a.y.iter().zip(&b.y).map(|(u, v)| u + lam * (v - u)).collect(),
    }
}

fn blend_assign(a: &Assignment, b: &Assignment, lam: f64) -> Assignment {
    let v = a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u + lam * (v - u)).collect();
    Assignment::new(a.slots(), a.users(), v).expect("convex combination of simplex rows")
}

/// Direction from the local point towards the maximizer of the surrogate
/// objective under the linearized CRB.
fn linearized_target(ctx: &Context, traj: &Trajectory, assign: &Assignment) -> Result<Option<(Trajectory, Assignment)>> {
    let local = LocalPoint::new(traj.clone(), assign.clone());
    let objective = build_objective_surrogate(&local, ctx.users, ctx.params, &ctx.omega)?;
    let linear = linearized_crb(traj, ctx.refs, ctx.params)?;
    let report = match solve_scheduling(&local, &objective, &[], &linear, ctx.params, &ctx.omega, &ctx.cfg.barrier) {
        Ok(r) => r,
        Err(SolverError::NumericalFailure { best }) => *best,
        Err(SolverError::InfeasibleStart { .. }) => return Ok(None),
    };
    Ok(candidate(report))
}

/// Gradient benchmark with a backtracking step on the exact objective and CRB.
pub fn benchmark_adj(
    params: &SystemParams,
    users: &UserSet,
    region: &SensingRegion,
    refs: &[Point],
    init: &Trajectory,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome> {
    let ctx = context(params, users, region, refs, cfg)?;
    check_start(&ctx, init)?;
    let mut traj = init.clone();
    let mut assign = Assignment::uniform(params.slots, users.len());
    let mut state = ctx.exact(&traj, &assign)?;
    let mut trace = RunTrace::default();
    trace.push(ctx.row(0, state, Event::Start));
    let mut termination = Termination::IterationLimit;
    'outer: for it in 1..=cfg.max_iterations {
        let Some((tt, ta)) = linearized_target(&ctx, &traj, &assign)? else {
            termination = Termination::Interrupted;
            break;
        };
        let mut lam = 1.0;
        let mut last = None;
        for _ in 0..cfg.adj_max_trials {
            let ct = blend_traj(&traj, &tt, lam);
            let ca = interior_schedule(blend_assign(&assign, &ta, lam));
            let e = ctx.exact(&ct, &ca)?;
            if e.crb_ok(params) && e.max_crb < params.crb_limit && e.objective > state.objective && ctx.geometry_ok(&ct) {
                let stalled = ctx.stalled(state.objective, e.objective);
                traj = ct;
                assign = ca;
                state = e;
                trace.push(ctx.row(it, state, Event::Adopted));
                if stalled {
                    termination = Termination::Converged;
                    break 'outer;
                }
                continue 'outer;
            }
            last = Some(e);
            lam *= 0.5;
        }
        if let Some(e) = last {
            trace.push(ctx.row(it, e, Event::Rejected));
        }
        termination = Termination::Interrupted;
        break;
    }
    trace.termination = Some(termination);
    Ok(RunOutcome { traj, assign, trace, termination })
}

/// Gradient benchmark with a constant step length. An iterate that breaks the
/// CRB limit is recorded as an excursion and ends the run; the returned point
/// is the last one that met the limit.
pub fn benchmark_fix(
    params: &SystemParams,
    users: &UserSet,
    region: &SensingRegion,
    refs: &[Point],
    init: &Trajectory,
    cfg: &OptimizerConfig,
) -> Result<RunOutcome> {
    let ctx = context(params, users, region, refs, cfg)?;
    check_start(&ctx, init)?;
    let step = cfg.fix_traj_step.unwrap_or(0.1 * params.step_limit());
    let mut traj = init.clone();
    let mut assign = Assignment::uniform(params.slots, users.len());
    let mut state = ctx.exact(&traj, &assign)?;
    let mut trace = RunTrace::default();
    trace.push(ctx.row(0, state, Event::Start));
    let mut termination = Termination::IterationLimit;
    for it in 1..=cfg.max_iterations {
        let Some((tt, ta)) = linearized_target(&ctx, &traj, &assign)? else {
            termination = Termination::Interrupted;
            break;
        };
        let moved = traj.points().zip(tt.points()).map(|(p, q)| p.dist(&q)).fold(0.0, f64::max);
        let shifted = assign.as_slice().iter().zip(ta.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let lt = if moved > 0.0 { (step / moved).min(1.0) } else { 0.0 };
        let la = if shifted > 0.0 { (cfg.fix_assign_step / shifted).min(1.0) } else { 0.0 };
        let ct = blend_traj(&traj, &tt, lt);
        let ca = interior_schedule(blend_assign(&assign, &ta, la));
        let e = ctx.exact(&ct, &ca)?;
        if !e.crb_ok(params) {
            trace.push(ctx.row(it, e, Event::Excursion));
            termination = Termination::Excursion;
            break;
        }
        if e.objective < state.objective || !ctx.geometry_ok(&ct) {
            trace.push(ctx.row(it, e, Event::Rejected));
            termination = Termination::NoImprovement;
            break;
        }
        let stalled = ctx.stalled(state.objective, e.objective);
        traj = ct;
        assign = ca;
        state = e;
        trace.push(ctx.row(it, state, Event::Adopted));
        if stalled {
            termination = Termination::Converged;
            break;
        }
    }
    trace.termination = Some(termination);
    Ok(RunOutcome { traj, assign, trace, termination })
}

/// Feasibility phase followed by the selected scheme; the trace holds both phases.
pub fn run_scheme(
    scheme: Scheme,
    params: &SystemParams,
    users: &UserSet,
    region: &SensingRegion,
    refs: &[Point],
    cfg: &OptimizerConfig,
) -> Result<RunOutcome> {
    let (init, feas) = feasibility_phase(params, region, refs, cfg)?;
    let mut out = match scheme {
        Scheme::Proposed => optimize(params, users, region, refs, &init, cfg)?,
        Scheme::Adj => benchmark_adj(params, users, region, refs, &init, cfg)?,
        Scheme::Fix => benchmark_fix(params, users, region, refs, &init, cfg)?,
    };
    let mut trace = feas;
    let offset = trace.rows.last().map_or(0.0, |r| r.seconds);
    trace.rows.extend(out.trace.rows.iter().cloned().map(|mut r| {
        r.seconds += offset;
        r
    }));
    trace.termination = out.trace.termination;
    out.trace = trace;
    Ok(out)
}
