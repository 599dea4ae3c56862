//! Result records and their CSV files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
}

/// One (task, method, seed, σ) cell. Wall time lives in a separate file so
/// the record CSV is byte-reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub sigma: Option<f64>,
    /// Nats.
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub gt: f64,
    pub n_test: usize,
    pub config_hash: String,
    pub status: Status,
    pub error: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Identity of a cell, with σ compared by bit pattern.
pub type CellKey = (String, String, u64, Option<u64>);

impl ResultRecord {
    pub fn key(&self) -> CellKey {
        (
            self.task.clone(),
            self.method.clone(),
            self.seed,
            self.sigma.map(f64::to_bits),
        )
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Serialize, Deserialize)]
struct TimingRow<S> {
    task: S,
    method: S,
    seed: u64,
    sigma: Option<f64>,
    wall_time_s: f64,
}

pub fn write_records(path: &Path, records: &[ResultRecord]) -> Result<(), CliError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in records {
            w.serialize(r)?;
        }
        if records.is_empty() {
            w.write_record([
                "task",
                "method",
                "seed",
                "sigma",
                "estimate",
                "std_error",
                "gt",
                "n_test",
                "config_hash",
                "status",
                "error",
            ])?;
        }
        w.flush().map_err(|e| CliError::Io(tmp.display().to_string(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn write_timings(path: &Path, records: &[ResultRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(TimingRow {
            task: r.task.as_str(),
            method: r.method.as_str(),
            seed: r.seed,
            sigma: r.sigma,
            wall_time_s: r.wall_time_s,
        })?;
    }
    w.flush().map_err(|e| CliError::Io(path.display().to_string(), e))
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Existing records by key, if the file is there, with wall times from a
/// `timings.csv` next to it.
pub fn load_existing(path: &Path) -> Result<BTreeMap<CellKey, ResultRecord>, CliError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let mut out: BTreeMap<CellKey, ResultRecord> = read_records(path)?.into_iter().map(|r| (r.key(), r)).collect();
    let timings = path.with_file_name("timings.csv");
    if timings.exists() {
        let mut r = csv::Reader::from_path(&timings)?;
        for row in r.deserialize::<TimingRow<String>>() {
            let t = row?;
            if let Some(rec) = out.get_mut(&(t.task, t.method, t.seed, t.sigma.map(f64::to_bits))) {
                rec.wall_time_s = t.wall_time_s;
            }
        }
    }
    Ok(out)
}
