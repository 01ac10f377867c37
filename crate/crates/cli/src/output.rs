//! File writers. Every CSV starts with a `#` line carrying the config hash
//! and seed; JSON files carry the same fields.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use isac_core::{Point, Trajectory};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.11e}")
}

/// Helper for CSV tables of numbers.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(stamp: &Stamp, header: &str) -> Self {
        let mut text = stamp.comment();
        text.push_str(header);
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf, CliError> {
        write_text(path, &self.text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

#[derive(Serialize)]
struct Meta<'a> {
    config_hash: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    meta: Meta<'a>,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes `body` with an extra `meta` object holding the stamp.
pub fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, body: &T) -> Result<PathBuf, CliError> {
    let v = Stamped { meta: Meta { config_hash: &stamp.config_hash, seed: stamp.seed }, body };
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_trajectory(path: &Path, stamp: &Stamp, traj: &Trajectory) -> Result<PathBuf, CliError> {
    let mut t = Table::new(stamp, "slot,x,y");
    for (n, p) in traj.points().enumerate() {
        t.row(&[n.to_string(), num(p.x), num(p.y)]);
    }
    t.write(path)
}

/// Data rows of a CSV file, skipping comments and the header.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let rows = read_rows(path)?;
    let parse = |s: &str| {
        s.parse::<f64>().map_err(|e| CliError::Config(format!("{}: bad number `{s}`: {e}", path.display())))
    };
    let mut pts = Vec::with_capacity(rows.len());
    for r in &rows {
        if r.len() != 3 {
            return Err(CliError::Config(format!("{}: expected slot,x,y rows", path.display())));
        }
        pts.push(Point::new(parse(&r[1])?, parse(&r[2])?));
    }
    Trajectory::from_points(&pts).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
