//! Parameter sweeps, CSV results and plot series.
//!
//! Runs are independent, so a sweep fans out over a rayon pool when the
//! `parallel` feature is on and falls back to a plain loop otherwise. Rows are
//! sorted by (protocol, interval, seed) before writing, so the CSV is the
//! same whatever the execution order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::channel::Priority;
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::mac::Protocol;
use crate::metrics::{summarize, SummaryRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    /// Mean generation intervals in microseconds, applied to both classes.
    pub intervals: Vec<u64>,
    pub seeds: u64,
    pub first_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            protocols: Protocol::ALL.to_vec(),
            intervals: [1, 2, 5, 10].iter().map(|s| s * 1_000_000).collect(),
            seeds: 10,
            first_seed: 1,
        }
    }
}

/// Identity of one run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub protocol: Protocol,
    pub interval_urgent: u64,
    pub interval_normal: u64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() || self.intervals.is_empty() {
            return Err(SimError::Config("sweep needs at least one protocol and one interval".into()));
        }
        if self.seeds == 0 {
            return Err(SimError::Config("sweep needs at least one seed".into()));
        }
        if self.intervals.contains(&0) {
            return Err(SimError::Config("sweep intervals must be positive".into()));
        }
        Ok(())
    }

    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::new();
        for &protocol in &self.protocols {
            for &iv in &self.intervals {
                for seed in self.first_seed..self.first_seed + self.seeds {
                    keys.push(RunKey { protocol, interval_urgent: iv, interval_normal: iv, seed });
                }
            }
        }
        keys
    }
}

fn key_of(row: &SummaryRow) -> RunKey {
    RunKey {
        protocol: row.protocol,
        interval_urgent: (row.mean_interval_urgent * 1e6).round() as u64,
        interval_normal: (row.mean_interval_normal * 1e6).round() as u64,
        seed: row.seed,
    }
}

/// Configuration for one sweep point.
pub fn config_for(base: &SimConfig, key: &RunKey) -> SimConfig {
    let mut cfg = base.clone();
    cfg.protocol = key.protocol;
    cfg.urgent.mean_interval = key.interval_urgent;
    cfg.normal.mean_interval = key.interval_normal;
    cfg.seed = key.seed;
    cfg
}

fn failed_row(key: &RunKey, err: &SimError) -> SummaryRow {
    SummaryRow {
        protocol: key.protocol,
        mean_interval_urgent: key.interval_urgent as f64 / 1e6,
        mean_interval_normal: key.interval_normal as f64 / 1e6,
        seed: key.seed,
        status: format!("failed: {err}"),
        generated: 0,
        delivered: 0,
        delivered_urgent: 0,
        delivered_normal: 0,
        pdr: 0.0,
        avg_delay_urgent_ms: None,
        avg_delay_normal_ms: None,
        energy_total_j: 0.0,
        energy_per_node_j: Vec::new(),
        energy_per_delivered_mj: None,
        energy_urgent_per_delivered_mj: None,
        energy_normal_per_delivered_mj: None,
        end_time_s: 0.0,
    }
}

/// Run one sweep point; a failure becomes a `failed` row.
pub fn run_one(base: &SimConfig, key: &RunKey) -> SummaryRow {
    let cfg = config_for(base, key);
    match crate::sim::run(&cfg) {
        Ok(out) => summarize(&out),
        Err(e) => failed_row(key, &e),
    }
}

#[cfg(feature = "parallel")]
fn execute(base: &SimConfig, keys: &[RunKey], threads: Option<usize>) -> Vec<SummaryRow> {
    use rayon::prelude::*;
    let work = || keys.par_iter().map(|k| run_one(base, k)).collect();
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute(base: &SimConfig, keys: &[RunKey], _threads: Option<usize>) -> Vec<SummaryRow> {
    keys.iter().map(|k| run_one(base, k)).collect()
}

/// Run every point of `spec` not already in `done`. `threads` limits the
/// worker count when running in parallel (`None`: one per core).
pub fn run_sweep(spec: &SweepSpec, base: &SimConfig, threads: Option<usize>, done: &HashSet<RunKey>) -> Result<Vec<SummaryRow>> {
    spec.validate()?;
    let keys: Vec<RunKey> = spec.keys().into_iter().filter(|k| !done.contains(k)).collect();
    let mut rows = execute(base, &keys, threads);
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by_key(key_of);
}

// ---------------------------------------------------------------- CSV

pub const CSV_HEADER: [&str; 18] = [
    "protocol",
    "mean_interval_urgent_s",
    "mean_interval_normal_s",
    "seed",
    "status",
    "generated",
    "delivered",
    "delivered_urgent",
    "delivered_normal",
    "pdr",
    "avg_delay_urgent_ms",
    "avg_delay_normal_ms",
    "energy_total_j",
    "energy_per_node_j",
    "energy_per_delivered_mj",
    "energy_urgent_per_delivered_mj",
    "energy_normal_per_delivered_mj",
    "end_time_s",
];

fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub fn to_record(r: &SummaryRow) -> Vec<String> {
    vec![
        r.protocol.to_string(),
        format!("{}", r.mean_interval_urgent),
        format!("{}", r.mean_interval_normal),
        r.seed.to_string(),
        r.status.clone(),
        r.generated.to_string(),
        r.delivered.to_string(),
        r.delivered_urgent.to_string(),
        r.delivered_normal.to_string(),
        fmt_f(r.pdr),
        fmt_opt(r.avg_delay_urgent_ms),
        fmt_opt(r.avg_delay_normal_ms),
        fmt_f(r.energy_total_j),
        r.energy_per_node_j.iter().map(|e| fmt_f(*e)).collect::<Vec<_>>().join(";"),
        fmt_opt(r.energy_per_delivered_mj),
        fmt_opt(r.energy_urgent_per_delivered_mj),
        fmt_opt(r.energy_normal_per_delivered_mj),
        fmt_f(r.end_time_s),
    ]
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: u64) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| SimError::NoData(format!("row {line}: missing column {}", CSV_HEADER[i])))
}

fn num<T: std::str::FromStr>(s: &str, what: &str, line: u64) -> Result<T> {
    s.parse().map_err(|_| SimError::NoData(format!("row {line}: bad {what} value {s:?}")))
}

fn opt(s: &str, what: &str, line: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        num(s, what, line).map(Some)
    }
}

pub fn from_record(rec: &csv::StringRecord, line: u64) -> Result<SummaryRow> {
    let f = |i| field(rec, i, line);
    Ok(SummaryRow {
        protocol: f(0)?.parse().map_err(SimError::NoData)?,
        mean_interval_urgent: num(f(1)?, CSV_HEADER[1], line)?,
        mean_interval_normal: num(f(2)?, CSV_HEADER[2], line)?,
        seed: num(f(3)?, CSV_HEADER[3], line)?,
        status: f(4)?.to_string(),
        generated: num(f(5)?, CSV_HEADER[5], line)?,
        delivered: num(f(6)?, CSV_HEADER[6], line)?,
        delivered_urgent: num(f(7)?, CSV_HEADER[7], line)?,
        delivered_normal: num(f(8)?, CSV_HEADER[8], line)?,
        pdr: num(f(9)?, CSV_HEADER[9], line)?,
        avg_delay_urgent_ms: opt(f(10)?, CSV_HEADER[10], line)?,
        avg_delay_normal_ms: opt(f(11)?, CSV_HEADER[11], line)?,
        energy_total_j: num(f(12)?, CSV_HEADER[12], line)?,
        energy_per_node_j: f(13)?
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| num(s, CSV_HEADER[13], line))
            .collect::<Result<_>>()?,
        energy_per_delivered_mj: opt(f(14)?, CSV_HEADER[14], line)?,
        energy_urgent_per_delivered_mj: opt(f(15)?, CSV_HEADER[15], line)?,
        energy_normal_per_delivered_mj: opt(f(16)?, CSV_HEADER[16], line)?,
        end_time_s: num(f(17)?, CSV_HEADER[17], line)?,
    })
}

pub fn write_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(to_record(r))?;
    }
    w.flush().map_err(|e| SimError::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        rows.push(from_record(&rec?, i as u64 + 2)?);
    }
    Ok(rows)
}

/// Keys of rows already present in `path`, if it exists.
pub fn existing_keys(path: &Path) -> Result<(Vec<SummaryRow>, HashSet<RunKey>)> {
    if !path.exists() {
        return Ok((Vec::new(), HashSet::new()));
    }
    let rows = read_csv(path)?;
    let keys = rows.iter().map(key_of).collect();
    Ok((rows, keys))
}

// ---------------------------------------------------------------- series

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Energy,
    Delay,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Energy => "energy",
            Metric::Delay => "delay",
        }
    }

    pub fn of(self, row: &SummaryRow, priority: Priority) -> Option<f64> {
        match (self, priority) {
            (Metric::Energy, Priority::Urgent) => row.energy_urgent_per_delivered_mj,
            (Metric::Energy, _) => row.energy_normal_per_delivered_mj,
            (Metric::Delay, Priority::Urgent) => row.avg_delay_urgent_ms,
            (Metric::Delay, _) => row.avg_delay_normal_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    /// Mean generation interval, seconds.
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub protocol: Protocol,
    pub priority: Priority,
    pub metric: Metric,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.tsv", self.protocol, self.priority.as_str().to_ascii_lowercase(), self.metric.as_str())
    }

    pub fn at(&self, x: f64) -> Option<&SeriesPoint> {
        self.points.iter().find(|p| (p.x - x).abs() < 1e-9)
    }
}

/// Mean and seed spread per (protocol, priority, metric, interval), over
/// successful runs only.
pub fn aggregate(rows: &[SummaryRow]) -> Result<Vec<Series>> {
    if rows.is_empty() {
        return Err(SimError::NoData("no result rows".into()));
    }
    let mut out = Vec::new();
    let protocols: std::collections::BTreeSet<Protocol> = rows.iter().map(|r| r.protocol).collect();
    for protocol in protocols {
        for priority in [Priority::Urgent, Priority::Normal] {
            for metric in [Metric::Energy, Metric::Delay] {
                let mut by_x: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
                for r in rows.iter().filter(|r| r.protocol == protocol && r.status == "ok") {
                    let x = match priority {
                        Priority::Urgent => r.mean_interval_urgent,
                        _ => r.mean_interval_normal,
                    };
                    let entry = by_x.entry((x * 1e6).round() as u64).or_default();
                    if let Some(v) = metric.of(r, priority) {
                        entry.push(v);
                    }
                }
                let points = by_x
                    .into_iter()
                    .filter(|(_, v)| !v.is_empty())
                    .map(|(x, v)| SeriesPoint {
                        x: x as f64 / 1e6,
                        mean: v.iter().sum::<f64>() / v.len() as f64,
                        min: v.iter().copied().fold(f64::INFINITY, f64::min),
                        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        n: v.len(),
                    })
                    .collect();
                out.push(Series { protocol, priority, metric, points });
            }
        }
    }
    Ok(out)
}

/// Write one TSV per series under `dir/series/`. Returns the files written.
pub fn emit_plot_data(rows: &[SummaryRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let series = aggregate(rows)?;
    let sdir = dir.join("series");
    fs::create_dir_all(&sdir).map_err(|e| SimError::io(&sdir, e))?;
    let mut written = Vec::new();
    for s in &series {
        let mut text = String::from("interval_s\tmean\tmin\tmax\n");
        for p in &s.points {
            text.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\n", p.x, p.mean, p.min, p.max));
        }
        let path = sdir.join(s.file_name());
        fs::write(&path, text).map_err(|e| SimError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
