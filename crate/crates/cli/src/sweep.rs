//! High-MI sweep over the sparse multivariate normal.

use std::path::Path;

use scoremi::tasks::{sparse_task, TaskSpec};
use serde::Serialize;

use crate::config::SweepConfig;
use crate::engine::{execute, Grid};
use crate::records::{write_records, write_timings, ResultRecord};
use crate::{write_json, CliError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub target: f64,
    pub gt: f64,
    pub method: String,
    pub sigma: Option<f64>,
    pub n_seeds: usize,
    pub estimate: f64,
    /// Across-seed standard error, or the Monte Carlo one for a single seed.
    pub std_error: f64,
}

pub fn sweep_tasks(cfg: &SweepConfig) -> Result<Vec<TaskSpec>, CliError> {
    cfg.targets
        .iter()
        .map(|&t| Ok(sparse_task(cfg.x_dim, cfg.y_dim, cfg.pairs, t, cfg.transform.chain())?))
        .collect()
}

fn points(tasks: &[TaskSpec], targets: &[f64], records: &[ResultRecord]) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for (task, &target) in tasks.iter().zip(targets) {
        let mut keys: Vec<(String, Option<f64>)> = Vec::new();
        for r in records.iter().filter(|r| r.task == task.id) {
            if !keys.iter().any(|k| k.0 == r.method && k.1.map(f64::to_bits) == r.sigma.map(f64::to_bits)) {
                keys.push((r.method.clone(), r.sigma));
            }
        }
        for (method, sigma) in keys {
            let sel: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| {
                    r.task == task.id
                        && r.method == method
                        && r.sigma.map(f64::to_bits) == sigma.map(f64::to_bits)
                        && r.is_ok()
                })
                .collect();
            if sel.is_empty() {
                continue;
            }
            let vals: Vec<f64> = sel.iter().filter_map(|r| r.estimate).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std_error = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                sel[0].std_error.unwrap_or(f64::NAN)
            };
            out.push(SweepPoint {
                target,
                gt: sel[0].gt,
                method,
                sigma,
                n_seeds: vals.len(),
                estimate: mean,
                std_error,
            });
        }
    }
    out
}

pub struct SweepOutcome {
    pub records: Vec<ResultRecord>,
    pub points: Vec<SweepPoint>,
}

/// Runs the sweep into `out_dir`: `records.csv`, `timings.csv` and
/// `plot_data.csv` with one `(GT, estimate, stderr)` row per target and method.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
    let tasks = sweep_tasks(cfg)?;
    let grid = Grid {
        methods: &cfg.methods,
        seeds: &cfg.seeds,
        sigmas: &cfg.sigmas,
        settings: &cfg.settings,
        workers: cfg.workers,
    };
    let outcome = execute(&tasks, &grid, Some(out_dir))?;
    write_records(&out_dir.join("records.csv"), &outcome.records)?;
    write_timings(&out_dir.join("timings.csv"), &outcome.records)?;
    write_json(&out_dir.join("tasks.json"), &tasks)?;
    let pts = points(&tasks, &cfg.targets, &outcome.records);
    let mut w = csv::Writer::from_path(out_dir.join("plot_data.csv"))?;
    for p in &pts {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
    Ok(SweepOutcome {
        records: outcome.records,
        points: pts,
    })
}
