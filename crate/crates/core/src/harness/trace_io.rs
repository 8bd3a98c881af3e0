//! Trace and bounds CSV files. Both start with `# key=value` metadata lines
//! followed by a header row.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bounds::BoundReport;
use crate::optimizer::TraceRecord;

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "consensus_err_max",
    "consensus_err_stacked",
    "gap",
    "grad_norm_sq",
    "running_avg_grad",
    "step_norm",
    "omega_used",
];

pub const BOUNDS_HEADER: [&str; 3] = ["k", "bound_name", "value"];

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Format(String),
}

/// Ordered `key=value` pairs written as leading comment lines.
pub type Metadata = Vec<(String, String)>;

/// The eight trace columns of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub consensus_err_max: f64,
    pub consensus_err_stacked: f64,
    pub gap: f64,
    pub grad_norm_sq: f64,
    pub running_avg_grad: f64,
    pub step_norm: f64,
    pub omega_used: f64,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        Self {
            k: r.k,
            consensus_err_max: r.consensus_err_max,
            consensus_err_stacked: r.consensus_err_stacked,
            gap: r.gap,
            grad_norm_sq: r.grad_norm_sq,
            running_avg_grad: r.running_avg_grad,
            step_norm: r.step_norm,
            omega_used: r.omega_used,
        }
    }
}

impl TraceRow {
    fn values(&self) -> [f64; 7] {
        [
            self.consensus_err_max,
            self.consensus_err_stacked,
            self.gap,
            self.grad_norm_sq,
            self.running_avg_grad,
            self.step_norm,
            self.omega_used,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsFile {
    pub meta: BTreeMap<String, String>,
    /// Values per bound name, in file order.
    pub series: BTreeMap<String, Vec<(usize, f64)>>,
}

fn meta_block(meta: &Metadata) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn split_meta(text: &str) -> (BTreeMap<String, String>, String) {
    let mut meta = BTreeMap::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    (meta, body)
}

pub fn render_trace(meta: &Metadata, rows: &[TraceRow]) -> Result<String, TraceIoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend(r.values().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| TraceIoError::Format(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(meta_block(meta) + &body)
}

pub fn write_trace(path: &Path, meta: &Metadata, rows: &[TraceRow]) -> Result<(), TraceIoError> {
    fs::write(path, render_trace(meta, rows)?)?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<TraceFile, TraceIoError> {
    parse_trace(&fs::read_to_string(path)?)
}

pub fn parse_trace(text: &str) -> Result<TraceFile, TraceIoError> {
    let (meta, body) = split_meta(text);
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(TraceIoError::Format(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64, TraceIoError> {
            rec[c]
                .parse()
                .map_err(|_| TraceIoError::Format(format!("row {}: bad value {:?}", i + 1, &rec[c])))
        };
        let k: usize = rec[0]
            .parse()
            .map_err(|_| TraceIoError::Format(format!("row {}: bad k {:?}", i + 1, &rec[0])))?;
        if k != i + 1 {
            return Err(TraceIoError::Format(format!(
                "row {} has k={k}; expected {}",
                i + 1,
                i + 1
            )));
        }
        rows.push(TraceRow {
            k,
            consensus_err_max: num(1)?,
            consensus_err_stacked: num(2)?,
            gap: num(3)?,
            grad_norm_sq: num(4)?,
            running_avg_grad: num(5)?,
            step_norm: num(6)?,
            omega_used: num(7)?,
        });
    }
    Ok(TraceFile { meta, rows })
}

/// Writes each report's values for `k = 1..=k_max`, one bound after another.
pub fn render_bounds(meta: &Metadata, reports: &[BoundReport], k_max: usize) -> Result<String, TraceIoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BOUNDS_HEADER)?;
    for report in reports {
        for (i, v) in report.series(k_max).iter().enumerate() {
            w.write_record([(i + 1).to_string(), report.name.clone(), v.to_string()])?;
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| TraceIoError::Format(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(meta_block(meta) + &body)
}

pub fn write_bounds(path: &Path, meta: &Metadata, reports: &[BoundReport], k_max: usize) -> Result<(), TraceIoError> {
    fs::write(path, render_bounds(meta, reports, k_max)?)?;
    Ok(())
}

pub fn read_bounds(path: &Path) -> Result<BoundsFile, TraceIoError> {
    parse_bounds(&fs::read_to_string(path)?)
}

pub fn parse_bounds(text: &str) -> Result<BoundsFile, TraceIoError> {
    let (meta, body) = split_meta(text);
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != BOUNDS_HEADER {
        return Err(TraceIoError::Format(format!("unexpected bounds header {header:?}")));
    }
    let mut series: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || TraceIoError::Format(format!("bounds row {}: {:?}", i + 1, rec));
        let k: usize = rec[0].parse().map_err(|_| bad())?;
        let v: f64 = rec[2].parse().map_err(|_| bad())?;
        series.entry(rec[1].to_string()).or_default().push((k, v));
    }
    Ok(BoundsFile { meta, series })
}
