//! Shared fixtures for the benchmarks.

use isac_core::sensing::{deployment_region_for, DeploymentRegion};
use isac_core::{Assignment, Point, SensingRegion, SystemParams, Trajectory, UserSet};

pub struct Fixture {
    pub params: SystemParams,
    pub users: UserSet,
    pub region: SensingRegion,
    pub omega: DeploymentRegion,
    pub traj: Trajectory,
    pub assign: Assignment,
    pub targets: Vec<Point>,
}

/// Reference parameters at `slots` slots, a circular trajectory and a ring of
/// targets on the edge of a 50 m region.
pub fn fixture(slots: usize, crb_limit: f64) -> Fixture {
    let r = SystemParams::reference();
    let params = SystemParams::new(
        r.period * slots as f64 / r.slots as f64,
        slots,
        r.max_speed,
        r.altitude,
        r.beta,
        r.power,
        r.comm_noise,
        r.sensing_noise,
        r.rcs_gain,
        r.alpha_t,
        r.window,
        r.detection,
        crb_limit,
    )
    .unwrap();
    let users = UserSet::new(vec![
        Point::new(-190.0, 180.0),
        Point::new(180.0, 190.0),
        Point::new(195.0, -100.0),
        Point::new(-50.0, -195.0),
        Point::new(-195.0, -120.0),
    ])
    .unwrap();
    let region = SensingRegion::disc(Point::default(), 50.0).unwrap();
    let omega = deployment_region_for(&params, &region).unwrap();
    let traj = Trajectory::circle(Point::default(), 70.0, slots, 0.1);
    let assign = Assignment::uniform(slots, users.len());
    let targets = (0..12)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / 12.0;
            Point::new(50.0 * th.cos(), 50.0 * th.sin())
        })
        .collect();
    Fixture { params, users, region, omega, traj, assign, targets }
}
