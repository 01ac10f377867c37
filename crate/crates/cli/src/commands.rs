//! Subcommand implementations. Each writes into an output directory and
//! returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use isac_core::audit::{audit, region_grid, AuditReport};
use isac_core::comm::throughput;
use isac_core::optimizer::{run_scheme, RunOutcome, Scheme};
use isac_core::refpoints::{discover_seeded, ReferenceSet};
use isac_core::sensing::{crb_or_inf, deployment_region_for, detection_radius};
use isac_core::{Disc, Point};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{num, read_trajectory, write_json, write_text, write_trajectory, Stamp, Table};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Options {
    pub out: PathBuf,
    pub refpoints: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub sweep_xil: Vec<f64>,
    pub grid: usize,
    pub tolerance: f64,
}

impl Options {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self { out: out.into(), refpoints: None, trajectory: None, sweep_xil: Vec::new(), grid: 113, tolerance: 1.01 }
    }
}

fn stamp(cfg: &RunConfig) -> Stamp {
    Stamp { config_hash: cfg.hash(), seed: cfg.seed }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    scheme: String,
    crb_limit_m2: f64,
    version: &'a str,
    files: Vec<String>,
    config: String,
}

fn write_metadata(dir: &Path, cfg: &RunConfig, command: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let names = files
        .iter()
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect();
    let meta = Metadata {
        command,
        scheme: cfg.scheme.to_string(),
        crb_limit_m2: cfg.system.crb_limit_m2,
        version: env!("CARGO_PKG_VERSION"),
        files: names,
        config: cfg.to_toml(),
    };
    files.push(write_json(&dir.join(format!("{command}.meta.json")), &stamp(cfg), &meta)?);
    Ok(())
}

#[derive(Serialize)]
struct RegionReport {
    detection_radius_m: f64,
    constraints: Vec<Disc>,
    inner_center: Point,
    inner_radius_m: f64,
}

pub fn characterize(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let params = cfg.params()?;
    let region = cfg.sensing_region()?;
    let omega = deployment_region_for(&params, &region)?;
    let (inner_center, inner_radius_m) = omega.inner_center();
    let st = stamp(cfg);
    let report = RegionReport {
        detection_radius_m: detection_radius(&params)?,
        constraints: omega.constraints.clone(),
        inner_center,
        inner_radius_m,
    };
    let mut files = vec![write_json(&opts.out.join("region.json"), &st, &report)?];
    let mut t = Table::new(&st, "index,x,y");
    for (i, p) in omega.boundary(256).into_iter().enumerate() {
        t.row(&[i.to_string(), num(p.x), num(p.y)]);
    }
    files.push(t.write(&opts.out.join("region_boundary.csv"))?);
    write_metadata(&opts.out, cfg, "characterize", &mut files)?;
    Ok(files)
}

fn discover_for(cfg: &RunConfig) -> Result<ReferenceSet, CliError> {
    let params = cfg.params()?;
    let region = cfg.sensing_region()?;
    Ok(discover_seeded(&params, &region, &cfg.discover_config(), cfg.seed)?)
}

fn xi_label(xi: f64) -> String {
    format!("xi{xi}")
}

pub fn refpoints(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let xis = sweep_or(&opts.sweep_xil, &cfg.sweep.crb_limits_m2);
    let mut files = Vec::new();
    if xis.is_empty() {
        let set = discover_for(cfg)?;
        files.push(write_json(&opts.out.join("refpoints.json"), &stamp(cfg), &set)?);
    } else {
        let mut t = Table::new(&stamp(cfg), "crb_limit,count,rounds");
        for &xi in &xis {
            let c = cfg.with_crb_limit(xi);
            let set = discover_for(&c)?;
            t.row(&[num(xi), set.points.len().to_string(), set.rounds.to_string()]);
            files.push(write_json(&opts.out.join(format!("refpoints_{}.json", xi_label(xi))), &stamp(&c), &set)?);
        }
        files.push(t.write(&opts.out.join("refpoints_sweep.csv"))?);
    }
    write_metadata(&opts.out, cfg, "refpoints", &mut files)?;
    Ok(files)
}

pub fn load_refpoints(path: &Path) -> Result<ReferenceSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn sweep_or(flag: &[f64], config: &[f64]) -> Vec<f64> {
    if flag.is_empty() { config.to_vec() } else { flag.to_vec() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub termination: String,
    pub min_throughput: f64,
    pub max_crb: f64,
    pub crb_limit_m2: f64,
    pub refpoints: usize,
    pub iterations: usize,
    pub excursion: bool,
}

fn write_run(dir: &Path, cfg: &RunConfig, set: &ReferenceSet, out: &RunOutcome) -> Result<(Vec<PathBuf>, RunSummary), CliError> {
    let params = cfg.params()?;
    let users = cfg.user_set()?;
    let st = stamp(cfg);
    let mut files = vec![write_trajectory(&dir.join("trajectory.csv"), &st, &out.traj)?];

    let k = users.len();
    let header: Vec<String> = std::iter::once("slot".to_string()).chain((0..k).map(|i| format!("a{i}"))).collect();
    let mut t = Table::new(&st, &header.join(","));
    for n in 0..out.assign.slots() {
        let cells: Vec<String> = std::iter::once(n.to_string()).chain(out.assign.row(n).iter().map(|&v| num(v))).collect();
        t.row(&cells);
    }
    files.push(t.write(&dir.join("assignment.csv"))?);

    let mut trace = format!("# config_hash={} seed={}\n", st.config_hash, st.seed);
    trace.push_str(&out.trace.to_csv());
    files.push(write_text(&dir.join("trace.csv"), &trace)?);

    let mut t = Table::new(&st, "window,max_crb,target_x,target_y");
    let mut overall: f64 = 0.0;
    for m in 0..out.traj.len() {
        let (v, s) = set
            .points
            .iter()
            .map(|&s| (crb_or_inf(&out.traj, m as isize, s, &params), s))
            .fold((0.0, Point::default()), |b, c| if c.0 > b.0 { c } else { b });
        overall = overall.max(v);
        t.row(&[m.to_string(), num(v), num(s.x), num(s.y)]);
    }
    files.push(t.write(&dir.join("crb_slots.csv"))?);

    let tp = throughput(&out.traj, &out.assign, &users, &params)?;
    let mut t = Table::new(&st, "user,x,y,throughput");
    for (i, (w, v)) in users.positions.iter().zip(&tp.per_user).enumerate() {
        t.row(&[i.to_string(), num(w.x), num(w.y), num(*v)]);
    }
    files.push(t.write(&dir.join("throughput.csv"))?);

    let summary = RunSummary {
        scheme: cfg.scheme,
        termination: out.termination.to_string(),
        min_throughput: tp.min_value,
        max_crb: overall,
        crb_limit_m2: params.crb_limit,
        refpoints: set.points.len(),
        iterations: out.trace.main_objectives().len().saturating_sub(1),
        excursion: out.trace.has_excursion(),
    };
    files.push(write_json(&dir.join("summary.json"), &st, &summary)?);
    Ok((files, summary))
}

fn run_one(cfg: &RunConfig, set: &ReferenceSet, dir: &Path, command: &str) -> Result<(Vec<PathBuf>, RunSummary), CliError> {
    let params = cfg.params()?;
    let users = cfg.user_set()?;
    let region = cfg.sensing_region()?;
    let out = run_scheme(cfg.scheme, &params, &users, &region, &set.points, &cfg.optimizer_config())?;
    let (mut files, summary) = write_run(dir, cfg, set, &out)?;
    write_metadata(dir, cfg, command, &mut files)?;
    Ok((files, summary))
}

/// Every combination of the requested sweep values; axes left empty keep the config value.
fn sweep_configs(cfg: &RunConfig, opts: &Options) -> Vec<(String, RunConfig)> {
    let xis = sweep_or(&opts.sweep_xil, &cfg.sweep.crb_limits_m2);
    let radii = &cfg.sweep.region_radii_m;
    let seeds = &cfg.sweep.seeds;
    if xis.is_empty() && radii.is_empty() && seeds.is_empty() {
        return Vec::new();
    }
    let opt = |v: &[f64]| if v.is_empty() { vec![None] } else { v.iter().map(|&x| Some(x)).collect() };
    let seed_axis: Vec<Option<u64>> = if seeds.is_empty() { vec![None] } else { seeds.iter().map(|&s| Some(s)).collect() };
    let mut out = Vec::new();
    for xi in opt(&xis) {
        for r in opt(radii) {
            for &seed in &seed_axis {
                let mut c = cfg.clone();
                let mut label = Vec::new();
                if let Some(xi) = xi {
                    c = c.with_crb_limit(xi);
                    label.push(xi_label(xi));
                }
                if let Some(r) = r {
                    c = c.with_region_radius(r);
                    label.push(format!("r{r}"));
                }
                if let Some(s) = seed {
                    c.seed = s;
                    label.push(format!("seed{s}"));
                }
                c.sweep = Default::default();
                out.push((label.join("_"), c));
            }
        }
    }
    out
}

pub fn optimize(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let sweep = sweep_configs(cfg, opts);
    if sweep.is_empty() {
        let set = match &opts.refpoints {
            Some(p) => load_refpoints(p)?,
            None => discover_for(cfg)?,
        };
        return Ok(run_one(cfg, &set, &opts.out, "optimize")?.0);
    }
    let mut files = Vec::new();
    let mut t = Table::new(&stamp(cfg), "label,crb_limit,region_radius,seed,refpoints,min_throughput,max_crb,termination");
    for (label, c) in sweep {
        let set = discover_for(&c)?;
        let (f, s) = run_one(&c, &set, &opts.out.join(&label), "optimize")?;
        files.extend(f);
        t.row(&[
            label,
            num(c.system.crb_limit_m2),
            num(c.region[0].radius),
            c.seed.to_string(),
            s.refpoints.to_string(),
            num(s.min_throughput),
            num(s.max_crb),
            s.termination,
        ]);
    }
    files.push(t.write(&opts.out.join("sweep.csv"))?);
    Ok(files)
}

/// Runs all three schemes on the same reference set.
pub fn benchmark(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let set = match &opts.refpoints {
        Some(p) => load_refpoints(p)?,
        None => discover_for(cfg)?,
    };
    let mut files = Vec::new();
    let mut t = Table::new(&stamp(cfg), "scheme,min_throughput,max_crb,iterations,termination,excursion");
    for scheme in [Scheme::Proposed, Scheme::Adj, Scheme::Fix] {
        let mut c = cfg.clone();
        c.scheme = scheme;
        let (f, s) = run_one(&c, &set, &opts.out.join(scheme.to_string()), "benchmark")?;
        files.extend(f);
        t.row(&[
            scheme.to_string(),
            num(s.min_throughput),
            num(s.max_crb),
            s.iterations.to_string(),
            s.termination,
            s.excursion.to_string(),
        ]);
    }
    files.push(t.write(&opts.out.join("benchmark.csv"))?);
    Ok(files)
}

pub fn evaluate_report(cfg: &RunConfig, opts: &Options) -> Result<AuditReport, CliError> {
    let params = cfg.params()?;
    let region = cfg.sensing_region()?;
    let omega = deployment_region_for(&params, &region)?;
    let path = opts.trajectory.clone().unwrap_or_else(|| opts.out.join("trajectory.csv"));
    let traj = read_trajectory(&path)?;
    if traj.len() != params.slots {
        return Err(CliError::Config(format!("{} has {} slots, config has {}", path.display(), traj.len(), params.slots)));
    }
    let samples = region_grid(&region, opts.grid)?;
    Ok(audit(&traj, &params, &omega, &samples, opts.tolerance))
}

pub fn evaluate(cfg: &RunConfig, opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let report = evaluate_report(cfg, opts)?;
    let mut files = vec![write_json(&opts.out.join("audit.json"), &stamp(cfg), &report)?];
    write_metadata(&opts.out, cfg, "evaluate", &mut files)?;
    Ok(files)
}
