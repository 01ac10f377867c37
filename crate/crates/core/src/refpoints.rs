//! Monte Carlo discovery of a finite set of reference targets whose CRB
//! checks stand in for the whole sensing region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{speed_feasible, Point, SensingRegion, SystemParams, Trajectory};
use crate::sensing::{crb_or_inf, deployment_region_for, DeploymentRegion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoverConfig {
    pub n_targets: usize,
    pub n_trajs: usize,
    pub max_stale_rounds: usize,
    /// Hard cap on the number of rounds.
    pub max_rounds: usize,
}

impl Default for DiscoverConfig {
    fn default() -> Self {
        Self { n_targets: 200, n_trajs: 100, max_stale_rounds: 5, max_rounds: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub points: Vec<Point>,
    pub rounds: usize,
    pub rounds_without_growth: usize,
    pub config: DiscoverConfig,
    pub seed: Option<u64>,
}

/// Uniform samples over the union of discs.
pub fn sample_targets(region: &SensingRegion, count: usize, rng: &mut impl Rng) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(Error::InvalidParams("target count must be at least 1".into()));
    }
    let areas: Vec<f64> = region.discs.iter().map(|d| d.radius * d.radius).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            areas.iter().position(|a| {
                acc += a;
                u < acc
            })
            .unwrap_or(areas.len() - 1)
        } else {
            rng.random_range(0..areas.len())
        };
        let d = region.discs[i];
        let r = d.radius * rng.random::<f64>().sqrt();
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        let p = Point::new(d.center.x + r * th.cos(), d.center.y + r * th.sin());
        // Overlaps would be drawn once per covering disc.
        let mult = region.multiplicity(p).max(1);
        if mult == 1 || rng.random::<f64>() * (mult as f64) < 1.0 {
            out.push(p);
        }
    }
    Ok(out)
}

/// Random closed loops inside `omega` that respect the speed limit: perturbed
/// ellipses around the inscribed centre, no wider than the chord-limited circle.
pub fn sample_feasible_trajectories(
    params: &SystemParams,
    omega: &DeploymentRegion,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Trajectory>> {
    let n = params.slots;
    let (center, inner) = omega.inner_center();
    if inner < 0.0 {
        return Err(Error::EmptyDeploymentRegion("no interior point".into()));
    }
    if inner <= 1e-9 * (1.0 + center.x.abs().max(center.y.abs())) {
        return Ok(vec![Trajectory::constant(center, n); count]);
    }
    let step = params.step_limit();
    let chord = step / (2.0 * (std::f64::consts::PI / n as f64).sin());
    let rmax = inner.min(chord);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let off = 0.05 * inner * rng.random::<f64>().sqrt();
        let th0 = rng.random_range(0.0..std::f64::consts::TAU);
        let c = Point::new(center.x + off * th0.cos(), center.y + off * th0.sin());
        let a = rmax * rng.random_range(0.1..0.75);
        let b = a * rng.random_range(0.6..1.0);
        let rot = rng.random_range(0.0..std::f64::consts::TAU);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let harmonics: Vec<(f64, f64, f64, f64)> = (1..=3)
            .map(|j| {
                let amp = 0.05 * a / j as f64;
                (
                    amp * rng.random::<f64>(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    amp * rng.random::<f64>(),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let (sr, cr) = rot.sin_cos();
        let mut pts: Vec<Point> = (0..n)
            .map(|i| {
                let th = phase + dir * std::f64::consts::TAU * i as f64 / n as f64;
                let (ex, ey) = (a * th.cos(), b * th.sin());
                let mut x = c.x + cr * ex - sr * ey;
                let mut y = c.y + sr * ex + cr * ey;
                for (j, &(ax, px, ay, py)) in harmonics.iter().enumerate() {
                    let k = (j + 2) as f64;
                    x += ax * (k * th + px).cos();
                    y += ay * (k * th + py).cos();
                }
                Point::new(x, y)
            })
            .collect();
        for p in pts.iter_mut() {
            if !omega.contains(*p) {
                let d = (p.x - center.x, p.y - center.y);
                let t = 0.999 * omega.ray_extent(center, d).min(1.0);
                *p = Point::new(center.x + t * d.0, center.y + t * d.1);
            }
        }
        let mut traj = Trajectory::from_points(&pts)?;
        let longest = traj.max_step_sq().sqrt();
        if longest > step {
            let g = traj.centroid();
            let lam = 0.999 * step / longest;
            traj = Trajectory {
                x: traj.x.iter().map(|x| g.x + lam * (x - g.x)).collect(),
                y: traj.y.iter().map(|y| g.y + lam * (y - g.y)).collect(),
            };
        }
        debug_assert!(speed_feasible(&traj, params));
        out.push(traj);
    }
    Ok(out)
}

/// Whether some window of `traj` exceeds the CRB limit at `s`.
pub fn violates(traj: &Trajectory, s: Point, params: &SystemParams) -> bool {
    (0..traj.len() as isize).any(|m| !(crb_or_inf(traj, m, s, params) <= params.crb_limit))
}

pub fn discover(
    params: &SystemParams,
    region: &SensingRegion,
    cfg: &DiscoverConfig,
    rng: &mut impl Rng,
) -> Result<ReferenceSet> {
    if cfg.n_targets == 0 || cfg.n_trajs == 0 || cfg.max_stale_rounds == 0 {
        return Err(Error::InvalidParams("discovery sample sizes must be at least 1".into()));
    }
    let omega = deployment_region_for(params, region)?;
    let mut points: Vec<Point> = Vec::new();
    let mut stale = 0;
    let mut rounds = 0;
    while stale < cfg.max_stale_rounds && rounds < cfg.max_rounds {
        rounds += 1;
        let targets = sample_targets(region, cfg.n_targets, rng)?;
        let mut trajs = sample_feasible_trajectories(params, &omega, cfg.n_trajs, rng)?;
        if params.crb_limit.is_infinite() {
            stale += 1;
            continue;
        }
        trajs.retain(|t| points.iter().all(|&s| !violates(t, s, params)));
        let before = points.len();
        for s in targets {
            if trajs.is_empty() {
                break;
            }
            if points.iter().any(|q| q.dist(&s) < 1e-6) {
                continue;
            }
            if trajs.iter().any(|t| violates(t, s, params)) {
                points.push(s);
                trajs.retain(|t| !violates(t, s, params));
            }
        }
        stale = if points.len() > before { 0 } else { stale + 1 };
    }
    Ok(ReferenceSet { points, rounds, rounds_without_growth: stale, config: cfg.clone(), seed: None })
}

/// `discover` driven by a ChaCha8 stream seeded with `seed`.
pub fn discover_seeded(params: &SystemParams, region: &SensingRegion, cfg: &DiscoverConfig, seed: u64) -> Result<ReferenceSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = discover(params, region, cfg, &mut rng)?;
    set.seed = Some(seed);
    Ok(set)
}
