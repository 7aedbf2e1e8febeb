//! File formats: versioned CSV tables, JSON reports and binary density
//! snapshots. Every file is written to a temporary sibling and renamed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, DensityField, SpatialGrid};
use crate::oracle::KalmanRun;
use crate::particle::{ParticleCloud, ParticleRun};
use crate::simulate::{ObservationPath, PathBundle};
use crate::zakai::FilterRun;

pub const SCHEMA_LINE: &str = "# schema=v1";

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Named numeric columns, one row per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Columns whose name starts with `prefix`, in header order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        self.header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(i, h)| (h.clone(), self.rows.iter().map(|r| r[i]).collect()))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == SCHEMA_LINE => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "expected '{SCHEMA_LINE}' as the first line, found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("missing CSV header".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut table = Self::new(header);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("CSV row {}: {e}", i + 1)))?;
            if row.len() != table.header.len() {
                return Err(Error::InvalidArgument(format!(
                    "CSV row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    table.header.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

fn estimate_header(m: usize, extras: &[String]) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=m).map(|i| format!("mean_{i}")));
    for i in 1..=m {
        for j in i..=m {
            h.push(format!("cov_{i}_{j}"));
        }
    }
    h.push("log_mass".into());
    h.extend(extras.iter().cloned());
    h
}

fn estimate_row(
    t: f64,
    mean: &[f64],
    cov: &nalgebra::DMatrix<f64>,
    log_mass: f64,
    extras: &[f64],
) -> Vec<f64> {
    let m = mean.len();
    let mut row = vec![t];
    row.extend_from_slice(mean);
    for i in 0..m {
        for j in i..m {
            row.push(cov[(i, j)]);
        }
    }
    row.push(log_mass);
    row.extend_from_slice(extras);
    row
}

fn pi_h_names(n: usize) -> Vec<String> {
    (1..=n).map(|l| format!("pi_h_{l}")).collect()
}

/// Uniform estimate table of a grid run (extras: `pi_h_l`).
pub fn zakai_table(run: &FilterRun) -> Table {
    let m = run.mean.first().map_or(0, Vec::len);
    let n = run.pi_h.first().map_or(0, Vec::len);
    let mut t = Table::new(estimate_header(m, &pi_h_names(n)));
    for k in 0..run.times.len() {
        t.push(estimate_row(
            run.times[k],
            &run.mean[k],
            &run.cov[k],
            run.log_mass[k],
            &run.pi_h[k],
        ));
    }
    t
}

/// Uniform estimate table of a particle run (extras: `ess`).
pub fn particle_table(run: &ParticleRun) -> Table {
    let m = run.estimates.first().map_or(0, |e| e.mean.len());
    let mut t = Table::new(estimate_header(m, &["ess".to_string()]));
    for (time, e) in run.times.iter().zip(&run.estimates) {
        t.push(estimate_row(*time, &e.mean, &e.cov, e.log_mass, &[e.ess]));
    }
    t
}

/// Uniform estimate table of the oracle (extras: `pi_h_l`).
pub fn kalman_table(run: &KalmanRun) -> Table {
    let m = run.beliefs.first().map_or(0, |b| b.mean.len());
    let n = run.pi_h.first().map_or(0, |v| v.len());
    let mut t = Table::new(estimate_header(m, &pi_h_names(n)));
    for ((time, b), ph) in run.times.iter().zip(&run.beliefs).zip(&run.pi_h) {
        t.push(estimate_row(
            *time,
            b.mean.as_slice(),
            &b.cov,
            b.log_mass,
            ph.as_slice(),
        ));
    }
    t
}

/// Path table `t, x_i, y_l, log_eta` of one replication.
pub fn path_table(b: &PathBundle) -> Table {
    let (m, n) = (b.signal.m, b.observation.n);
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|l| format!("y_{l}")));
    header.push("log_eta".into());
    let mut t = Table::new(header);
    for (k, time) in b.times.iter().enumerate() {
        let mut row = vec![*time];
        row.extend_from_slice(b.signal.at(k));
        row.extend_from_slice(b.observation.at(k));
        row.push(b.log_eta[k]);
        t.push(row);
    }
    t
}

/// Observation path from any table with a `t` column and `y_1..y_n` columns.
pub fn observation_from_table(t: &Table) -> Result<ObservationPath> {
    let times = t
        .column("t")
        .ok_or_else(|| Error::InvalidArgument("observation table has no 't' column".into()))?;
    let ys = t.columns_with_prefix("y_");
    if ys.is_empty() || times.len() < 2 {
        return Err(Error::InvalidArgument(
            "observation table needs y_1.. columns and at least two rows".into(),
        ));
    }
    let dt = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
            return Err(Error::GridMismatch(
                "observation times are not uniformly spaced".into(),
            ));
        }
    }
    let n = ys.len();
    let mut y = Vec::with_capacity(times.len() * n);
    for k in 0..times.len() {
        for (_, col) in &ys {
            y.push(col[k]);
        }
    }
    ObservationPath::new(n, dt, y)
}

pub fn observation_table(y: &ObservationPath) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=y.n).map(|l| format!("y_{l}")));
    let mut t = Table::new(header);
    for k in 0..=y.steps() {
        let mut row = vec![k as f64 * y.dt];
        row.extend_from_slice(y.at(k));
        t.push(row);
    }
    t
}

/// Particle positions and log-weights: `step, particle, x_i, log_weight`.
pub fn particle_dump_table(dumps: &[(usize, ParticleCloud)]) -> Table {
    let m = dumps.first().map_or(0, |(_, c)| c.m);
    let mut header = vec!["step".to_string(), "particle".to_string()];
    header.extend((1..=m).map(|i| format!("x_{i}")));
    header.push("log_weight".into());
    let mut t = Table::new(header);
    for (k, c) in dumps {
        for i in 0..c.len() {
            let mut row = vec![*k as f64, i as f64];
            row.extend_from_slice(c.particle(i));
            row.push(c.log_weights[i] + c.log_mass);
            t.push(row);
        }
    }
    t
}

/// Differences between two estimate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareMetrics {
    pub rows: usize,
    pub rmse_mean: f64,
    pub sup_mean_error: f64,
    pub time_avg_mean_error: f64,
    pub sup_cov_error: f64,
    pub sup_log_mass_error: f64,
}

pub fn compare_tables(a: &Table, b: &Table) -> Result<CompareMetrics> {
    let (ta, tb) = (
        a.column("t")
            .ok_or_else(|| Error::InvalidArgument("first table has no 't' column".into()))?,
        b.column("t")
            .ok_or_else(|| Error::InvalidArgument("second table has no 't' column".into()))?,
    );
    if ta.len() != tb.len()
        || ta
            .iter()
            .zip(&tb)
            .any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0))
    {
        return Err(Error::GridMismatch(format!(
            "time grids differ ({} vs {} rows)",
            ta.len(),
            tb.len()
        )));
    }
    let (ma, mb) = (
        a.columns_with_prefix("mean_"),
        b.columns_with_prefix("mean_"),
    );
    let (ca, cb) = (a.columns_with_prefix("cov_"), b.columns_with_prefix("cov_"));
    let names = |v: &[(String, Vec<f64>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    if names(&ma) != names(&mb) || names(&ca) != names(&cb) {
        return Err(Error::GridMismatch(
            "tables describe different state dimensions".into(),
        ));
    }
    let rows = ta.len();
    let (mut sq, mut sup_mean, mut avg_mean) = (0.0, 0.0f64, 0.0);
    for k in 0..rows {
        let mut row_err = 0.0f64;
        for ((_, x), (_, y)) in ma.iter().zip(&mb) {
            let d = x[k] - y[k];
            sq += d * d;
            row_err = row_err.max(d.abs());
        }
        sup_mean = sup_mean.max(row_err);
        avg_mean += row_err;
    }
    let sup_cov = ca
        .iter()
        .zip(&cb)
        .flat_map(|((_, x), (_, y))| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    let sup_log_mass = match (a.column("log_mass"), b.column("log_mass")) {
        (Some(x), Some(y)) => x
            .iter()
            .zip(&y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max),
        _ => f64::NAN,
    };
    Ok(CompareMetrics {
        rows,
        rmse_mean: (sq / (rows * ma.len().max(1)) as f64).sqrt(),
        sup_mean_error: sup_mean,
        time_avg_mean_error: avg_mean / rows as f64,
        sup_cov_error: sup_cov,
        sup_log_mass_error: sup_log_mass,
    })
}

/// Little-endian snapshot: `u64 m`, then `f64 lower, f64 upper` per axis,
/// `u64 nodes` per axis, then the values row-major (last axis fastest,
/// the in-memory layout).
pub fn encode_snapshot(p: &DensityField) -> Vec<u8> {
    let axes = p.grid.axes();
    let mut out = Vec::with_capacity(8 + axes.len() * 24 + p.values.len() * 8);
    out.extend_from_slice(&(axes.len() as u64).to_le_bytes());
    for ax in axes {
        out.extend_from_slice(&ax.lower.to_le_bytes());
        out.extend_from_slice(&ax.upper.to_le_bytes());
    }
    for ax in axes {
        out.extend_from_slice(&(ax.nodes as u64).to_le_bytes());
    }
    for v in &p.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<DensityField> {
    let bad = || Error::InvalidArgument("truncated density snapshot".into());
    let mut pos = 0;
    let mut take = |len: usize| -> Result<[u8; 8]> {
        let chunk = bytes.get(pos..pos + len).ok_or_else(bad)?;
        pos += len;
        Ok(chunk.try_into().expect("8-byte field"))
    };
    let m = u64::from_le_bytes(take(8)?) as usize;
    if !(1..=2).contains(&m) {
        return Err(Error::InvalidArgument(format!(
            "snapshot dimension {m} unsupported"
        )));
    }
    let mut bounds = Vec::with_capacity(m);
    for _ in 0..m {
        bounds.push((f64::from_le_bytes(take(8)?), f64::from_le_bytes(take(8)?)));
    }
    let mut axes = Vec::with_capacity(m);
    for (lower, upper) in bounds {
        axes.push(Axis {
            lower,
            upper,
            nodes: u64::from_le_bytes(take(8)?) as usize,
        });
    }
    let grid = SpatialGrid::new(axes)?;
    let mut flat = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        flat.push(f64::from_le_bytes(take(8)?));
    }
    DensityField::new(grid, flat, 0.0)
}

pub fn write_snapshot(path: &Path, p: &DensityField) -> Result<()> {
    write_atomic(path, &encode_snapshot(p))
}

pub fn read_snapshot(path: &Path) -> Result<DensityField> {
    decode_snapshot(&fs::read(path)?)
}
