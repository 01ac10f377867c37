//! Run configuration in human units (dB, dBm, meters, seconds).

use std::path::{Path, PathBuf};

use isac_core::model::DetectionSpec;
use isac_core::optimizer::{OptimizerConfig, Scheme};
use isac_core::refpoints::DiscoverConfig;
use isac_core::{Disc, Point, SensingRegion, SystemParams, UserSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// `x` dB as a linear ratio.
pub fn db_to_linear(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// `x` dBm in watts.
pub fn dbm_to_watts(x: f64) -> f64 {
    10f64.powf((x - 30.0) / 10.0)
}

/// Fields left out take the reference values. Detection defaults to a 250 m
/// radius when neither `detection_radius_m` nor `detection_snr_db` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub period_s: f64,
    pub slots: usize,
    pub max_speed_mps: f64,
    pub altitude_m: f64,
    pub beta_db: f64,
    pub power_dbm: f64,
    pub comm_noise_dbm: f64,
    pub sensing_noise_dbm: f64,
    pub rcs_gain_db: f64,
    pub alpha_t: f64,
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_snr_db: Option<f64>,
    pub crb_limit_m2: f64,
}

const DEFAULT_DETECTION_RADIUS_M: f64 = 250.0;

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            period_s: 100.0,
            slots: 25,
            max_speed_mps: 10.0,
            altitude_m: 20.0,
            beta_db: -60.0,
            power_dbm: 20.0,
            comm_noise_dbm: -100.0,
            sensing_noise_dbm: -100.0,
            rcs_gain_db: 53.0,
            alpha_t: 100.0,
            window: 5,
            detection_radius_m: None,
            detection_snr_db: None,
            crb_limit_m2: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub n_targets: usize,
    pub n_trajs: usize,
    pub max_stale_rounds: usize,
    pub max_rounds: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        let d = DiscoverConfig::default();
        Self { n_targets: d.n_targets, n_trajs: d.n_trajs, max_stale_rounds: d.max_stale_rounds, max_rounds: d.max_rounds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub eps_out: f64,
    pub eps_feasibility: f64,
    pub max_iterations: usize,
    pub max_feasibility_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_traj_step_m: Option<f64>,
    pub fix_assign_step: f64,
    pub adj_max_trials: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            eps_out: d.eps_out,
            eps_feasibility: d.eps_feasibility,
            max_iterations: d.max_iterations,
            max_feasibility_iterations: d.max_feasibility_iterations,
            fix_traj_step_m: d.fix_traj_step,
            fix_assign_step: d.fix_assign_step,
            adj_max_trials: d.adj_max_trials,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub crb_limits_m2: Vec<f64>,
    pub region_radii_m: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default = "default_users")]
    pub users: Vec<[f64; 2]>,
    #[serde(default = "default_region")]
    pub region: Vec<DiscConfig>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub discovery: DiscoveryConfig,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_users() -> Vec<[f64; 2]> {
    vec![[-190.0, 180.0], [180.0, 190.0], [195.0, -100.0], [-50.0, -195.0], [-195.0, -120.0]]
}

fn default_region() -> Vec<DiscConfig> {
    vec![DiscConfig { center: [0.0, 0.0], radius: 50.0 }]
}

fn default_scheme() -> Scheme {
    Scheme::Proposed
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            users: default_users(),
            region: default_region(),
            scheme: default_scheme(),
            seed: 0,
            out: default_out(),
            discovery: DiscoveryConfig::default(),
            optimizer: OptimizerSection::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.sensing_region()?;
        self.user_set()?;
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams, CliError> {
        let s = &self.system;
        let detection = match (s.detection_radius_m, s.detection_snr_db) {
            (None, None) => DetectionSpec::Radius(DEFAULT_DETECTION_RADIUS_M),
            (Some(r), None) => DetectionSpec::Radius(r),
            (None, Some(db)) => DetectionSpec::SnrThreshold(db_to_linear(db)),
            _ => {
                return Err(CliError::Config(
                    "system: set at most one of detection_radius_m and detection_snr_db".into(),
                ))
            }
        };
        SystemParams::new(
            s.period_s,
            s.slots,
            s.max_speed_mps,
            s.altitude_m,
            db_to_linear(s.beta_db),
            dbm_to_watts(s.power_dbm),
            dbm_to_watts(s.comm_noise_dbm),
            dbm_to_watts(s.sensing_noise_dbm),
            db_to_linear(s.rcs_gain_db),
            s.alpha_t,
            s.window,
            detection,
            s.crb_limit_m2,
        )
        .map_err(|e| CliError::Config(format!("system: {e}")))
    }

    pub fn sensing_region(&self) -> Result<SensingRegion, CliError> {
        if self.region.is_empty() {
            return Err(CliError::Config("region: at least one disc is required".into()));
        }
        let discs = self
            .region
            .iter()
            .map(|d| Disc { center: Point::new(d.center[0], d.center[1]), radius: d.radius })
            .collect();
        SensingRegion::new(discs).map_err(|e| CliError::Config(format!("region: {e}")))
    }

    pub fn user_set(&self) -> Result<UserSet, CliError> {
        UserSet::new(self.users.iter().map(|u| Point::new(u[0], u[1])).collect())
            .map_err(|e| CliError::Config(format!("users: {e}")))
    }

    pub fn discover_config(&self) -> DiscoverConfig {
        let d = &self.discovery;
        DiscoverConfig {
            n_targets: d.n_targets,
            n_trajs: d.n_trajs,
            max_stale_rounds: d.max_stale_rounds,
            max_rounds: d.max_rounds,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            eps_out: o.eps_out,
            eps_feasibility: o.eps_feasibility,
            max_iterations: o.max_iterations,
            max_feasibility_iterations: o.max_feasibility_iterations,
            fix_traj_step: o.fix_traj_step_m,
            fix_assign_step: o.fix_assign_step,
            adj_max_trials: o.adj_max_trials,
            ..OptimizerConfig::default()
        }
    }

    pub fn with_crb_limit(&self, xi: f64) -> Self {
        let mut c = self.clone();
        c.system.crb_limit_m2 = xi;
        c
    }

    /// Scales every disc of the sensing region to `radius`.
    pub fn with_region_radius(&self, radius: f64) -> Self {
        let mut c = self.clone();
        c.region.iter_mut().for_each(|d| d.radius = radius);
        c
    }
}
