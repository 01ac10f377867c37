use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isac_core::sensing::crb;
use isac_core::{Point, SystemParams, Trajectory};
use serde_json::Value;

const SMALL: &str = r#"
seed = 3
users = [[-190.0, 180.0], [180.0, 190.0], [50.0, -195.0]]

[system]
period_s = 32.0
slots = 8
window = 3
crb_limit_m2 = 3.0

[discovery]
n_targets = 100
n_trajs = 50
max_stale_rounds = 3
max_rounds = 50
"#;

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = isac(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Header first, comment lines dropped.
fn read_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let rows = read_rows(path);
    let i = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

fn st(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn constraint_discs(report: &Value) -> Vec<(Point, f64)> {
    report["constraints"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| {
            let c = Point::new(d["center"]["x"].as_f64().unwrap(), d["center"]["y"].as_f64().unwrap());
            (c, d["radius"].as_f64().unwrap())
        })
        .collect()
}

#[test]
fn higher_power_gives_larger_deployment_region() {
    let dir = tempfile::tempdir().unwrap();
    // SNR threshold giving a 250 m detection radius at 20 dBm.
    let p = SystemParams::reference();
    let snr_db = 10.0 * (p.echo_snr_gain() / (250.0f64.powi(2) + 400.0).powi(2)).log10();
    let region = "[[region]]\ncenter = [-60.0, 0.0]\nradius = 40.0\n\n[[region]]\ncenter = [50.0, 20.0]\nradius = 30.0\n";
    let mut reports = Vec::new();
    for dbm in [20, 30] {
        let text = format!("{region}\n[system]\npower_dbm = {dbm}.0\ndetection_snr_db = {snr_db}\n");
        let cfg = write_config(dir.path(), &format!("p{dbm}.toml"), &text);
        let out = dir.path().join(format!("p{dbm}"));
        run_ok(&["characterize", "--config", st(&cfg), "--out", st(&out)]);
        reports.push((json(&out.join("region.json")), out.join("region_boundary.csv")));
    }
    let (low, high) = (&reports[0], &reports[1]);
    assert!((low.0["detection_radius_m"].as_f64().unwrap() - 250.0).abs() < 1e-6);
    assert!(high.0["detection_radius_m"].as_f64().unwrap() > 250.0);
    let discs = constraint_discs(&high.0);
    let (xs, ys) = (column(&low.1, "x"), column(&low.1, "y"));
    for (x, y) in xs.iter().zip(&ys) {
        let q = Point::new(*x, *y);
        assert!(discs.iter().all(|(c, r)| q.dist(c) < r - 1.0), "{q:?} on the 20 dBm boundary is not strictly inside");
    }
}

#[test]
fn single_disc_region_shrinks_by_its_radius() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[[region]]\ncenter = [10.0, -5.0]\nradius = 50.0\n");
    run_ok(&["characterize", "--config", st(&cfg), "--out", st(dir.path())]);
    let report = json(&dir.path().join("region.json"));
    let discs = constraint_discs(&report);
    assert_eq!(discs.len(), 1);
    assert_eq!(discs[0].0, Point::new(10.0, -5.0));
    assert!((discs[0].1 - 200.0).abs() < 1e-12);
    assert_eq!(report["meta"]["seed"], 0);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[system]\nslots = \"many\"\n");
    let out = isac(&["characterize", "--config", st(&cfg), "--out", st(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("slots"));
}

#[test]
fn empty_region_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "region = []\n");
    let out = isac(&["refpoints", "--config", st(&cfg), "--out", st(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("region"));
}

#[test]
fn refpoints_are_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["refpoints", "--config", st(&cfg), "--out", st(&a)]);
    run_ok(&["refpoints", "--config", st(&cfg), "--out", st(&b)]);
    let fa = fs::read(a.join("refpoints.json")).unwrap();
    assert_eq!(fa, fs::read(b.join("refpoints.json")).unwrap());
    run_ok(&["refpoints", "--config", st(&cfg), "--seed", "4", "--out", st(&b)]);
    assert_ne!(fa, fs::read(b.join("refpoints.json")).unwrap());
}

#[test]
fn refpoint_count_does_not_grow_with_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["refpoints", "--sweep-xil", "2.5,5,10", "--out", st(dir.path())]);
    let path = dir.path().join("refpoints_sweep.csv");
    let counts = column(&path, "count");
    assert_eq!(column(&path, "crb_limit"), vec![2.5, 5.0, 10.0]);
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
    for xi in ["2.5", "5", "10"] {
        let set = json(&dir.path().join(format!("refpoints_xi{xi}.json")));
        assert!(set["points"].is_array());
    }
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect()
}

/// Header and row count of every CSV.
fn shape(dir: &Path) -> Vec<(String, Vec<String>, usize)> {
    listing(dir)
        .into_iter()
        .filter(|f| f.ends_with(".csv") && f != "trace.csv")
        .map(|f| {
            let rows = read_rows(&dir.join(&f));
            (f, rows[0].clone(), rows.len())
        })
        .collect()
}

#[test]
fn optimize_outputs_for_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let refs = dir.path().join("refs");
    run_ok(&["refpoints", "--config", st(&cfg), "--out", st(&refs)]);
    let refs_file = refs.join("refpoints.json");
    let limit = 3.0;
    let mut shapes = Vec::new();
    for scheme in ["proposed", "adj", "fix"] {
        let out = dir.path().join(scheme);
        run_ok(&["optimize", "--config", st(&cfg), "--refpoints", st(&refs_file), "--scheme", scheme, "--out", st(&out)]);
        let files = listing(&out);
        for f in ["trajectory.csv", "assignment.csv", "trace.csv", "crb_slots.csv", "throughput.csv", "summary.json", "optimize.meta.json"] {
            assert!(files.contains(f), "{scheme} is missing {f}");
        }
        let trace = out.join("trace.csv");
        let header = &read_rows(&trace)[0];
        assert_eq!(header.join(","), "iteration,phase,objective,max_crb,violation,seconds,event");
        let first = fs::read_to_string(out.join("trajectory.csv")).unwrap();
        assert!(first.starts_with("# config_hash=") && first.lines().next().unwrap().ends_with("seed=3"));
        let summary = json(&out.join("summary.json"));
        assert_eq!(summary["scheme"], scheme);
        assert_eq!(summary["meta"]["seed"], 3);
        assert_eq!(column(&out.join("crb_slots.csv"), "window").len(), 8);
        if scheme == "proposed" {
            let rows = read_rows(&trace);
            let objs: Vec<f64> = rows[1..]
                .iter()
                .filter(|r| r[1] == "main" && r[6] != "rejected")
                .map(|r| r[2].parse().unwrap())
                .collect();
            assert!(objs.len() >= 2);
            assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{objs:?}");
            let worst = column(&out.join("crb_slots.csv"), "max_crb").into_iter().fold(0.0, f64::max);
            assert!(worst <= limit * (1.0 + 1e-9), "{worst}");
        }
        shapes.push(shape(&out));
    }
    assert_eq!(shapes[1], shapes[2]);
    assert_eq!(listing(&dir.path().join("adj")), listing(&dir.path().join("fix")));
}

fn write_traj(path: &Path, t: &Trajectory) {
    let mut text = String::from("# hand-written\nslot,x,y\n");
    for (n, p) in t.points().enumerate() {
        text.push_str(&format!("{n},{},{}\n", p.x, p.y));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn single_cell_audit_equals_direct_crb() {
    let dir = tempfile::tempdir().unwrap();
    let t = Trajectory::circle(Point::default(), 100.0, 25, 0.3);
    let tf = dir.path().join("t.csv");
    write_traj(&tf, &t);
    run_ok(&["evaluate", "--trajectory", st(&tf), "--grid", "1", "--out", st(dir.path())]);
    let report = json(&dir.path().join("audit.json"));
    let p = SystemParams::reference();
    let direct = (0..25).map(|m| crb(&t, m, Point::default(), &p).unwrap()).fold(0.0, f64::max);
    assert_eq!(report["samples"], 1);
    assert_eq!(report["pairs"], 25);
    assert_eq!(report["worst"]["crb"].as_f64().unwrap(), direct);
    assert!(report["flagged_slots"].as_array().unwrap().is_empty());
}

#[test]
fn slot_outside_detection_region_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trajectory::circle(Point::default(), 100.0, 25, 0.0);
    t.x[7] = 0.0;
    t.y[7] = 230.0;
    let tf = dir.path().join("t.csv");
    write_traj(&tf, &t);
    run_ok(&["evaluate", "--trajectory", st(&tf), "--grid", "20", "--out", st(dir.path())]);
    let report = json(&dir.path().join("audit.json"));
    assert_eq!(report["flagged_slots"], serde_json::json!([7]));
}

#[test]
fn wrong_slot_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let tf = dir.path().join("t.csv");
    write_traj(&tf, &Trajectory::circle(Point::default(), 100.0, 10, 0.0));
    let out = isac(&["evaluate", "--trajectory", st(&tf), "--out", st(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_run_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // Deployment region collapses to the region centre.
    let text = format!("{SMALL}\n[[region]]\ncenter = [0.0, 0.0]\nradius = 250.0\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = isac(&["optimize", "--config", st(&cfg), "--out", st(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let text = format!("{SMALL}\n[[region]]\ncenter = [0.0, 0.0]\nradius = 260.0\n");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = isac(&["characterize", "--config", st(&cfg), "--out", st(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn metadata_sidecar_embeds_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    run_ok(&["characterize", "--config", st(&cfg), "--out", st(dir.path())]);
    let meta = json(&dir.path().join("characterize.meta.json"));
    let mut embedded = isac_cli::config::RunConfig::parse(meta["config"].as_str().unwrap()).unwrap();
    let original = isac_cli::config::RunConfig::load(&cfg).unwrap();
    assert_eq!(embedded.out, dir.path());
    assert_eq!(embedded.hash(), original.hash());
    embedded.out = original.out.clone();
    assert_eq!(embedded, original);
    assert_eq!(meta["meta"]["config_hash"].as_str().unwrap(), original.hash());
}
