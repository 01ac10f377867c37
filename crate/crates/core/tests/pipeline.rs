use isac_core::model::DetectionSpec;
use isac_core::optimizer::{
    benchmark_adj, benchmark_fix, feasibility_phase, initial_trajectory, optimize, run_scheme, Event, OptimizerConfig, Phase,
    Scheme, Termination,
};
use isac_core::refpoints::{discover_seeded, DiscoverConfig};
use isac_core::sensing::{deployment_region_for, max_crb, max_localization_margin};
use isac_core::{Error, Point, SensingRegion, SystemParams, UserSet};

fn small_params(xi: f64) -> SystemParams {
    SystemParams::new(
        32.0,
        8,
        10.0,
        20.0,
        1e-6,
        0.1,
        1e-13,
        1e-13,
        10f64.powf(5.3),
        100.0,
        3,
        DetectionSpec::Radius(250.0),
        xi,
    )
    .unwrap()
}

fn users() -> UserSet {
    UserSet::new(vec![Point::new(-190.0, 180.0), Point::new(180.0, 190.0), Point::new(50.0, -195.0)]).unwrap()
}

fn ring(radius: f64, count: usize) -> Vec<Point> {
    let mut v: Vec<Point> = (0..count)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / count as f64;
            Point::new(radius * th.cos(), radius * th.sin())
        })
        .collect();
    v.push(Point::default());
    v
}

#[test]
fn unlimited_crb_is_feasible_immediately() {
    let p = SystemParams::reference().with_crb_limit(f64::INFINITY);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let (traj, trace) = feasibility_phase(&p, &d, &ring(50.0, 8), &OptimizerConfig::default()).unwrap();
    let omega = deployment_region_for(&p, &d).unwrap();
    assert_eq!(traj, initial_trajectory(&p, &omega));
    assert_eq!(trace.rows.len(), 1);
    assert_eq!(trace.termination, Some(Termination::Feasible));
}

#[test]
fn single_point_region_is_infeasible() {
    let p = SystemParams::reference().with_crb_limit(10.0);
    let d = SensingRegion::disc(Point::default(), 250.0).unwrap();
    let r = feasibility_phase(&p, &d, &[Point::default()], &OptimizerConfig::default());
    assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
}

#[test]
fn feasibility_phase_reduces_margin_to_negative() {
    let p = SystemParams::reference().with_crb_limit(2.2);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let refs = ring(50.0, 12);
    let omega = deployment_region_for(&p, &d).unwrap();
    assert!(max_localization_margin(&initial_trajectory(&p, &omega), &p, &refs) > 0.0);
    let (traj, trace) = feasibility_phase(&p, &d, &refs, &OptimizerConfig::default()).unwrap();
    assert!(trace.rows.len() > 1 && trace.rows.len() <= 40, "{} rows", trace.rows.len());
    let margins: Vec<f64> = trace.rows.iter().map(|r| r.objective).collect();
    assert!(margins.windows(2).all(|w| w[1] < w[0]));
    assert!(max_localization_margin(&traj, &p, &refs) < 0.0);
    assert!(max_crb(&traj, &p, &refs).unwrap().value < 2.2);
}

#[test]
fn main_loop_is_monotone_and_feasible() {
    let p = small_params(3.0);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let refs = ring(50.0, 8);
    let cfg = OptimizerConfig::default();
    let out = run_scheme(Scheme::Proposed, &p, &users(), &d, &refs, &cfg).unwrap();
    let objs = out.trace.main_objectives();
    assert!(objs.len() >= 2);
    assert!(objs.windows(2).all(|w| w[1] - w[0] >= -1e-9));
    assert!(objs.last().unwrap() > &objs[0]);
    for r in out.trace.rows.iter().filter(|r| r.phase == Phase::Main && r.event != Event::Rejected) {
        assert!(r.max_crb <= 3.0 + 1e-6, "{r:?}");
        assert!(r.violation <= 1e-6);
    }
    assert!(max_crb(&out.traj, &p, &refs).unwrap().value <= 3.0 + 1e-6);
}

#[test]
fn fixed_step_of_zero_stops_at_once() {
    let p = small_params(3.0);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let refs = ring(50.0, 8);
    let cfg = OptimizerConfig { fix_traj_step: Some(0.0), fix_assign_step: 0.0, ..OptimizerConfig::default() };
    let (init, _) = feasibility_phase(&p, &d, &refs, &cfg).unwrap();
    let out = benchmark_fix(&p, &users(), &d, &refs, &init, &cfg).unwrap();
    let objs = out.trace.main_objectives();
    assert_eq!(objs.len(), 2);
    assert_eq!(objs[0], objs[1]);
    assert_eq!(out.termination, Termination::Converged);
    assert_eq!(out.traj, init);
}

#[test]
fn adjustable_step_moves_from_interior_point() {
    let p = small_params(3.0);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let refs = ring(50.0, 8);
    let cfg = OptimizerConfig { max_iterations: 1, ..OptimizerConfig::default() };
    let (init, _) = feasibility_phase(&p, &d, &refs, &cfg).unwrap();
    let out = benchmark_adj(&p, &users(), &d, &refs, &init, &cfg).unwrap();
    let objs = out.trace.main_objectives();
    assert_eq!(objs.len(), 2);
    assert!(objs[1] > objs[0]);
    assert_ne!(out.traj, init);
}

#[test]
fn optimize_rejects_infeasible_start() {
    let p = small_params(0.01);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let omega = deployment_region_for(&p, &d).unwrap();
    let init = initial_trajectory(&p, &omega);
    let r = optimize(&p, &users(), &d, &ring(50.0, 4), &init, &OptimizerConfig::default());
    assert!(matches!(r, Err(Error::InvalidParams(_))));
}

#[test]
fn runs_are_reproducible() {
    let p = small_params(3.0);
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let cfg = DiscoverConfig { n_targets: 100, n_trajs: 50, max_stale_rounds: 3, max_rounds: 50 };
    let f1 = discover_seeded(&p, &d, &cfg, 9).unwrap();
    let f2 = discover_seeded(&p, &d, &cfg, 9).unwrap();
    assert_eq!(f1, f2);
    let o = OptimizerConfig::default();
    let a = run_scheme(Scheme::Proposed, &p, &users(), &d, &f1.points, &o).unwrap();
    let b = run_scheme(Scheme::Proposed, &p, &users(), &d, &f2.points, &o).unwrap();
    assert_eq!(a.traj, b.traj);
    assert_eq!(a.assign, b.assign);
    let strip = |t: &isac_core::optimizer::RunTrace| {
        t.rows.iter().map(|r| (r.iteration, r.phase, r.objective, r.max_crb, r.violation, r.event)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a.trace), strip(&b.trace));
}

#[test]
fn reference_count_falls_with_looser_limit() {
    let d = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let cfg = DiscoverConfig::default();
    let mut means = Vec::new();
    let mut near = 0;
    let mut total = 0;
    for xi in [2.5, 5.0, 10.0] {
        let p = SystemParams::reference().with_crb_limit(xi);
        let mut sum = 0;
        for seed in 0..5 {
            let f = discover_seeded(&p, &d, &cfg, seed).unwrap();
            assert!(f.points.iter().all(|&q| d.contains(q)));
            near += f.points.iter().filter(|q| q.dist(&Point::default()) >= 45.0).count();
            total += f.points.len();
            sum += f.points.len();
        }
        means.push(sum as f64 / 5.0);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
    assert!(near as f64 >= 0.5 * total as f64, "{near} of {total} near the boundary");
}
