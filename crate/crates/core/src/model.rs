//! Scenario data shared by every other module: system constants, the periodic
//! trajectory, the relaxed user schedule, ground users and the sensing region.
//!
//! All quantities are linear SI (watts, meters, seconds). Conversions from
//! dB/dBm live at the configuration boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A horizontal position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// How the on-demand detection requirement is stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectionSpec {
    /// Minimum echo SNR (linear).
    SnrThreshold(f64),
    /// Maximum horizontal UAV-to-target distance in meters.
    Radius(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Operation period (s).
    pub period: f64,
    /// Number of slots per period.
    pub slots: usize,
    /// Slot length (s), `period / slots`.
    pub delta: f64,
    /// Maximum UAV speed (m/s).
    pub max_speed: f64,
    /// Flight altitude (m).
    pub altitude: f64,
    /// Reference channel gain at unit distance (linear).
    pub beta: f64,
    /// Transmit power (W).
    pub power: f64,
    /// Communication noise power (W).
    pub comm_noise: f64,
    /// Sensing noise power, including residual self-interference (W).
    pub sensing_noise: f64,
    /// Radar cross-section factor times receive antenna gain (linear).
    pub rcs_gain: f64,
    /// Ranging-variance scale.
    pub alpha_t: f64,
    /// Slots per localization window.
    pub window: usize,
    pub detection: DetectionSpec,
    /// Maximum allowable localization CRB (m²). May be `f64::INFINITY`.
    pub crb_limit: f64,
    /// `rcs_gain * beta * power / (alpha_t * sensing_noise)`.
    pub eta: f64,
}

impl SystemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        period: f64,
        slots: usize,
        max_speed: f64,
        altitude: f64,
        beta: f64,
        power: f64,
        comm_noise: f64,
        sensing_noise: f64,
        rcs_gain: f64,
        alpha_t: f64,
        window: usize,
        detection: DetectionSpec,
        crb_limit: f64,
    ) -> Result<Self> {
        let params = Self {
            period,
            slots,
            delta: period / slots as f64,
            max_speed,
            altitude,
            beta,
            power,
            comm_noise,
            sensing_noise,
            rcs_gain,
            alpha_t,
            window,
            detection,
            crb_limit,
            eta: rcs_gain * beta * power / (alpha_t * sensing_noise),
        };
        params.validate()?;
        Ok(params)
    }

    /// Default scenario: 100 s period, 25 slots, 10 m/s, 20 m altitude,
    /// -60 dB reference gain, 20 dBm power, -100 dBm noise on both links,
    /// 53 dB RCS gain, ranging scale 100, windows of 5 slots, 250 m detection
    /// radius and a 10 m² CRB limit.
    pub fn reference() -> Self {
        Self::new(
            100.0,
            25,
            10.0,
            20.0,
            1e-6,
            0.1,
            1e-13,
            1e-13,
            10f64.powf(5.3),
            100.0,
            5,
            DetectionSpec::Radius(250.0),
            10.0,
        )
        .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("period", self.period),
            ("max_speed", self.max_speed),
            ("altitude", self.altitude),
            ("beta", self.beta),
            ("power", self.power),
            ("comm_noise", self.comm_noise),
            ("sensing_noise", self.sensing_noise),
            ("rcs_gain", self.rcs_gain),
            ("alpha_t", self.alpha_t),
            ("crb_limit", self.crb_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.window < 3 {
            return Err(Error::InvalidParams(format!(
                "window must be at least 3 slots, got {}",
                self.window
            )));
        }
        if self.slots < self.window {
            return Err(Error::InvalidParams(format!(
                "slots ({}) must be at least the window length ({})",
                self.slots, self.window
            )));
        }
        match self.detection {
            DetectionSpec::SnrThreshold(v) | DetectionSpec::Radius(v) if !(v > 0.0) => {
                return Err(Error::InvalidParams(format!(
                    "detection requirement must be positive, got {v}"
                )));
            }
            _ => {}
        }
        let eta = self.rcs_gain * self.beta * self.power / (self.alpha_t * self.sensing_noise);
        if ((eta - self.eta) / eta).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "eta {} inconsistent with its definition ({eta})",
                self.eta
            )));
        }
        if ((self.delta * self.slots as f64 - self.period) / self.period).abs() > 1e-12 {
            return Err(Error::InvalidParams("slot length inconsistent with period".into()));
        }
        Ok(())
    }

    /// Replace the CRB limit, keeping everything else.
    pub fn with_crb_limit(&self, crb_limit: f64) -> Self {
        Self { crb_limit, ..self.clone() }
    }

    /// Largest distance the UAV may travel in one slot.
    pub fn step_limit(&self) -> f64 {
        self.delta * self.max_speed
    }

    /// Communication SNR at unit distance, `beta * P / sigma²`.
    pub fn comm_snr_gain(&self) -> f64 {
        self.beta * self.power / self.comm_noise
    }

    /// Echo SNR at unit distance, `rcs_gain * beta * P / sigma0²`.
    pub fn echo_snr_gain(&self) -> f64 {
        self.rcs_gain * self.beta * self.power / self.sensing_noise
    }
}

/// Reduce any integer slot index onto `0..len`.
pub fn wrap(n: isize, len: usize) -> usize {
    n.rem_euclid(len as isize) as usize
}

/// Periodic UAV waypoints, one per slot. Index `n + N` aliases `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} x and {} y entries",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidParams("trajectory has no slots".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("trajectory has non-finite entries".into()));
        }
        Ok(Self { x, y })
    }

    pub fn from_points(points: &[Point]) -> Result<Self> {
        Self::new(points.iter().map(|p| p.x).collect(), points.iter().map(|p| p.y).collect())
    }

    /// Every slot at the same position.
    pub fn constant(p: Point, slots: usize) -> Self {
        Self { x: vec![p.x; slots], y: vec![p.y; slots] }
    }

    /// Regular polygon on a circle, counter-clockwise, first vertex at `phase`.
    pub fn circle(center: Point, radius: f64, slots: usize, phase: f64) -> Self {
        let (x, y) = (0..slots)
            .map(|n| {
                let th = phase + std::f64::consts::TAU * n as f64 / slots as f64;
                (center.x + radius * th.cos(), center.y + radius * th.sin())
            })
            .unzip();
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, n: isize) -> Point {
        let i = wrap(n, self.len());
        Point::new(self.x[i], self.y[i])
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.x.iter().zip(&self.y).map(|(&x, &y)| Point::new(x, y))
    }

    /// Slot indices `m, m+1, ..., m+len-1`, wrapped.
    pub fn window(&self, m: isize, len: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        (0..len).map(move |j| wrap(m + j as isize, n))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v + dx).collect(),
            y: self.y.iter().map(|v| v + dy).collect(),
        }
    }

    pub fn centroid(&self) -> Point {
        let n = self.len() as f64;
        Point::new(self.x.iter().sum::<f64>() / n, self.y.iter().sum::<f64>() / n)
    }

    /// Largest squared displacement between consecutive slots, including the
    /// wraparound step from the last slot back to the first.
    pub fn max_step_sq(&self) -> f64 {
        (0..self.len() as isize)
            .map(|n| self.point(n + 1).dist_sq(&self.point(n)))
            .fold(0.0, f64::max)
    }
}

/// Horizontal-plus-altitude distance from the UAV in slot `n` to ground point `p`.
pub fn slot_distance(traj: &Trajectory, n: isize, p: Point, altitude: f64) -> f64 {
    slot_distance_sq(traj, n, p, altitude).sqrt()
}

pub fn slot_distance_sq(traj: &Trajectory, n: isize, p: Point, altitude: f64) -> f64 {
    traj.point(n).dist_sq(&p) + altitude * altitude
}

/// Whether every periodic step stays within `delta * V`.
pub fn speed_feasible(traj: &Trajectory, params: &SystemParams) -> bool {
    let lim = params.step_limit();
    // Relative slack absorbs rounding for trajectories built exactly on the limit.
    traj.max_step_sq() <= lim * lim * (1.0 + 1e-12)
}

/// Relaxed user schedule, row-major `slots x users`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    slots: usize,
    users: usize,
    a: Vec<f64>,
}

impl Assignment {
    pub fn new(slots: usize, users: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != slots * users || users == 0 {
            return Err(Error::DimensionMismatch(format!(
                "assignment needs {slots}x{users} entries, got {}",
                a.len()
            )));
        }
        let out = Self { slots, users, a };
        out.validate(1e-9)?;
        Ok(out)
    }

    /// Every slot shared equally, `1/K` each.
    pub fn uniform(slots: usize, users: usize) -> Self {
        Self { slots, users, a: vec![1.0 / users as f64; slots * users] }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        for n in 0..self.slots {
            let row = self.row(n);
            if row.iter().any(|&v| !(-tol..=1.0 + tol).contains(&v)) {
                return Err(Error::InvalidParams(format!("slot {n} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidParams(format!("slot {n} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Largest deviation from the simplex over all rows.
    pub fn simplex_violation(&self) -> f64 {
        (0..self.slots)
            .map(|n| {
                let row = self.row(n);
                let neg = row.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
                neg.max((row.iter().sum::<f64>() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.a[n * self.users + k]
    }

    pub fn set(&mut self, n: usize, k: usize, v: f64) {
        self.a[n * self.users + k] = v;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.a[n * self.users..(n + 1) * self.users]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }
}

/// Ground positions of the communication users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSet {
    pub positions: Vec<Point>,
}

impl UserSet {
    pub fn new(positions: Vec<Point>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParams("at least one user is required".into()));
        }
        if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidParams("user positions must be finite".into()));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, p: Point) -> bool {
        p.dist_sq(&self.center) <= self.radius * self.radius
    }
}

/// Union of closed discs where on-demand sensing requests may target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingRegion {
    pub discs: Vec<Disc>,
}

impl SensingRegion {
    pub fn new(discs: Vec<Disc>) -> Result<Self> {
        if discs.is_empty() {
            return Err(Error::InvalidParams("sensing region needs at least one disc".into()));
        }
        // A zero radius is a single target point.
        if let Some(d) = discs.iter().find(|d| !(d.radius >= 0.0 && d.radius.is_finite())) {
            return Err(Error::InvalidParams(format!(
                "sensing disc radius must be nonnegative, got {}",
                d.radius
            )));
        }
        Ok(Self { discs })
    }

    pub fn disc(center: Point, radius: f64) -> Result<Self> {
        Self::new(vec![Disc { center, radius }])
    }

    pub fn contains(&self, p: Point) -> bool {
        self.discs.iter().any(|d| d.contains(p))
    }

    /// Number of discs covering `p`.
    pub fn multiplicity(&self, p: Point) -> usize {
        self.discs.iter().filter(|d| d.contains(p)).count()
    }

    /// Distance from `p` to the nearest disc boundary among discs containing it.
    pub fn depth(&self, p: Point) -> f64 {
        self.discs
            .iter()
            .filter(|d| d.contains(p))
            .map(|d| d.radius - p.dist(&d.center))
            .fold(0.0, f64::max)
    }
}
