//! Dense-grid check of the localization and detection constraints over the
//! whole sensing region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionSpec, Point, SensingRegion, SystemParams, Trajectory};
use crate::sensing::{crb_or_inf, echo_snr, DeploymentRegion};

/// Cell centres of a `g x g` grid over each disc's bounding square, kept when
/// inside the disc and not already covered by an earlier disc.
pub fn region_grid(region: &SensingRegion, g: usize) -> Result<Vec<Point>> {
    if g == 0 {
        return Err(Error::InvalidParams("grid density must be at least 1".into()));
    }
    let mut out = Vec::new();
    for (i, d) in region.discs.iter().enumerate() {
        let h = 2.0 * d.radius / g as f64;
        for a in 0..g {
            for b in 0..g {
                let p = Point::new(
                    d.center.x - d.radius + (a as f64 + 0.5) * h,
                    d.center.y - d.radius + (b as f64 + 0.5) * h,
                );
                if d.contains(p) && !region.discs[..i].iter().any(|e| e.contains(p)) {
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPoint {
    pub crb: f64,
    pub window: usize,
    pub target: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub pairs: usize,
    /// Pairs `(m, s)` whose CRB exceeds `tolerance * crb_limit`.
    pub violations: usize,
    pub violation_fraction: f64,
    pub tolerance: f64,
    pub worst: Option<WorstPoint>,
    /// Slots outside the deployment region or below the detection threshold somewhere in the region.
    pub flagged_slots: Vec<usize>,
    /// Slots whose step to the next slot exceeds the speed limit.
    pub speed_violations: Vec<usize>,
}

/// Linear echo SNR a detection needs; a radius spec maps to the SNR at that horizontal range.
pub fn detection_threshold(params: &SystemParams) -> f64 {
    match params.detection {
        DetectionSpec::SnrThreshold(t) => t,
        DetectionSpec::Radius(r) => params.echo_snr_gain() / (r * r + params.altitude * params.altitude).powi(2),
    }
}

/// Exact CRB over every window and every sample.
pub fn audit(
    traj: &Trajectory,
    params: &SystemParams,
    omega: &DeploymentRegion,
    samples: &[Point],
    tolerance: f64,
) -> AuditReport {
    let n = traj.len();
    let limit = tolerance * params.crb_limit;
    let mut violations = 0;
    let mut worst: Option<WorstPoint> = None;
    for &s in samples {
        for m in 0..n {
            let v = crb_or_inf(traj, m as isize, s, params);
            if !(v <= limit) {
                violations += 1;
            }
            if worst.as_ref().is_none_or(|w| v > w.crb) {
                worst = Some(WorstPoint { crb: v, window: m, target: s });
            }
        }
    }
    let threshold = detection_threshold(params);
    let flagged_slots = (0..n)
        .filter(|&i| {
            let p = traj.point(i as isize);
            !omega.contains(p) || samples.iter().any(|&s| echo_snr(traj, i as isize, s, params) < threshold * (1.0 - 1e-9))
        })
        .collect();
    let step = params.step_limit();
    let speed_violations = (0..n)
        .filter(|&i| traj.point(i as isize).dist(&traj.point(i as isize + 1)) > step * (1.0 + 1e-12))
        .collect();
    let pairs = samples.len() * n;
    AuditReport {
        samples: samples.len(),
        pairs,
        violations,
        violation_fraction: if pairs > 0 { violations as f64 / pairs as f64 } else { 0.0 },
        tolerance,
        worst,
        flagged_slots,
        speed_violations,
    }
}
