//! CSV records shared by every subcommand. The column set is documented in
//! `docs/csv-schema.md` and only ever grows at the end.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

/// One measured cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub command: String,
    pub problem: String,
    pub n: usize,
    pub nnz: usize,
    pub backend: String,
    pub preconditioner: String,
    pub ranks: usize,
    pub partitioner: String,
    pub repeat: usize,
    pub iterations: usize,
    /// ‖b − Ax‖₂ recomputed from the returned solution.
    pub residual_abs: f64,
    /// `residual_abs / ‖b‖₂`.
    pub residual_rel: f64,
    pub converged: bool,
    pub time_ms: f64,
    /// Median `time_ms` over the repeats of the same cell.
    pub median_time_ms: f64,
    pub live_bytes: usize,
    pub bytes_per_dof: f64,
    /// Per-rank halo sizes joined with `;`.
    pub halo_sizes: String,
    pub messages: u64,
    pub status: Status,
    pub note: String,
}

impl BenchRecord {
    pub fn new(command: &str, problem: &str, n: usize, nnz: usize, backend: &str) -> Self {
        Self {
            command: command.into(),
            problem: problem.into(),
            n,
            nnz,
            backend: backend.into(),
            preconditioner: String::new(),
            ranks: 1,
            partitioner: String::new(),
            repeat: 0,
            iterations: 0,
            residual_abs: f64::NAN,
            residual_rel: f64::NAN,
            converged: false,
            time_ms: 0.0,
            median_time_ms: 0.0,
            live_bytes: 0,
            bytes_per_dof: 0.0,
            halo_sizes: String::new(),
            messages: 0,
            status: Status::Ok,
            note: String::new(),
        }
    }
}

pub fn write_records<W: Write>(records: &[BenchRecord], out: W) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Header row plus one line per record, RFC 4180 quoting.
pub fn write_csv(records: &[BenchRecord], path: &Path) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)?;
    write_records(records, file)
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Column names in order. Written explicitly so an empty table still has
/// its header.
pub const HEADER: [&str; 21] = [
    "command",
    "problem",
    "n",
    "nnz",
    "backend",
    "preconditioner",
    "ranks",
    "partitioner",
    "repeat",
    "iterations",
    "residual_abs",
    "residual_rel",
    "converged",
    "time_ms",
    "median_time_ms",
    "live_bytes",
    "bytes_per_dof",
    "halo_sizes",
    "messages",
    "status",
    "note",
];

/// Median of a non-empty slice; the mean of the middle pair for even length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
