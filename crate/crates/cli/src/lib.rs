//! Experiment orchestration for the score-based MI estimators: run configs,
//! seeded cells, cached results, benchmark tables and the high-MI sweep.

pub mod config;
pub mod engine;
pub mod records;
pub mod seeding;
pub mod selftest;
pub mod sweep;
pub mod table;

use std::path::{Path, PathBuf};

use scoremi::baselines::BaselineError;
use scoremi::estimators::{EstimatorError, EstimatorVariant};
use scoremi::score::ScoreError;
use scoremi::tasks::{Catalogue, TaskError, TaskSpec};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Method, RunConfig};
use crate::engine::{execute, Grid};
use crate::records::{read_records, write_records, write_timings, ResultRecord};
use crate::table::{render_table, write_table_csv};

/// Environment variable naming the directory results are written under.
pub const OUTPUT_ROOT_ENV: &str = "SCOREMI_OUTPUT_ROOT";

/// Iteration cap applied by `--desk-scale`.
pub const DESK_ITERATIONS: u64 = 50_000;
/// Largest per-variable dimension kept by `--desk-scale`.
pub const DESK_MAX_DIM: usize = 10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{0}")]
    Cell(String),
    #[error("no result records found")]
    NoRecords,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// `configured` (relative to the output root unless absolute), else
/// `<root>/<name>`.
pub fn resolve_output_dir(name: Option<&str>, configured: Option<&str>) -> PathBuf {
    let root = output_root();
    match configured {
        Some(d) if Path::new(d).is_absolute() => PathBuf::from(d),
        Some(d) => root.join(d),
        None => root.join(name.unwrap_or("run")),
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

/// Command-line overrides of a config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub desk_scale: bool,
    /// Keeps only these MINDE variants; baselines are untouched.
    pub variants: Option<Vec<EstimatorVariant>>,
    pub sigmas: Option<Vec<f64>>,
}

/// `"5"` means seeds 0..5; `"1,4,9"` lists them.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("bad seed list {s:?}"));
    if s.contains(',') {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        Ok((0..n).collect())
    }
}

impl Overrides {
    fn apply_common(&self, methods: &mut Vec<Method>, seeds: &mut Vec<u64>, sigmas: &mut Vec<f64>, iterations: &mut u64) {
        if let Some(s) = &self.seeds {
            *seeds = s.clone();
        }
        if let Some(s) = &self.sigmas {
            *sigmas = s.clone();
        }
        if let Some(vs) = &self.variants {
            methods.retain(|m| match m {
                Method::Minde(v) => vs.contains(v),
                Method::Baseline(_) => true,
            });
            for v in vs {
                if !methods.contains(&Method::Minde(*v)) {
                    methods.push(Method::Minde(*v));
                }
            }
        }
        if self.desk_scale {
            *iterations = (*iterations).min(DESK_ITERATIONS);
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        self.apply_common(
            &mut cfg.methods,
            &mut cfg.seeds,
            &mut cfg.sigmas,
            &mut cfg.settings.train.iterations,
        );
    }

    pub fn apply_sweep(&self, cfg: &mut config::SweepConfig) {
        self.apply_common(
            &mut cfg.methods,
            &mut cfg.seeds,
            &mut cfg.sigmas,
            &mut cfg.settings.train.iterations,
        );
    }
}

/// Catalogue tasks named by the config, in canonical table order. Under
/// desk scale, tasks with a variable wider than 10 dims are dropped.
pub fn select_tasks(ids: &[String], desk_scale: bool) -> Result<Vec<TaskSpec>, CliError> {
    let catalogue = Catalogue::build()?;
    for id in ids {
        catalogue.get(id)?;
    }
    let mut out = Vec::new();
    for e in catalogue.tasks {
        if !ids.contains(&e.spec.id) {
            continue;
        }
        let (m, n) = e.spec.dims()?;
        if desk_scale && m.max(n) > DESK_MAX_DIM {
            log::warn!("desk scale: skipping {} ({m} × {n})", e.spec.id);
            continue;
        }
        out.push(e.spec);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: Option<String>,
    pub config_hash: String,
    pub settings_hash: String,
    pub output_dir: String,
    pub tasks: Vec<String>,
    pub records: usize,
    pub computed: usize,
    pub reused: usize,
    pub failures: usize,
    pub config: RunConfig,
}

/// Executes a run config into `out_dir`, writing `records.csv`,
/// `timings.csv`, `tasks.json`, `table.txt`, `table.csv` and `summary.json`.
pub fn run(cfg: &RunConfig, desk_scale: bool, out_dir: &Path) -> Result<(RunSummary, Vec<ResultRecord>), CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
    let tasks = select_tasks(&cfg.tasks, desk_scale)?;
    if tasks.is_empty() {
        return Err(CliError::Config("no tasks left to run".into()));
    }
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
    let table = render_table(&outcome.records, &tasks)?;
    std::fs::write(out_dir.join("table.txt"), &table.text).map_err(|e| CliError::Io(out_dir.display().to_string(), e))?;
    write_table_csv(&out_dir.join("table.csv"), &table.cells)?;
    let summary = RunSummary {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        settings_hash: cfg.settings.hash(),
        output_dir: out_dir.display().to_string(),
        tasks: tasks.iter().map(|t| t.id.clone()).collect(),
        records: outcome.records.len(),
        computed: outcome.computed,
        reused: outcome.reused,
        failures: outcome.failures(),
        config: cfg.clone(),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok((summary, outcome.records))
}

/// Renders the table of a finished run directory.
pub fn table_for_dir(dir: &Path) -> Result<table::Table, CliError> {
    let records = read_records(&dir.join("records.csv"))?;
    let tasks_path = dir.join("tasks.json");
    let tasks: Vec<TaskSpec> = if tasks_path.exists() {
        let text = std::fs::read_to_string(&tasks_path).map_err(|e| CliError::Io(tasks_path.display().to_string(), e))?;
        serde_json::from_str(&text)?
    } else {
        Catalogue::build()?.tasks.into_iter().map(|e| e.spec).collect()
    };
    render_table(&records, &tasks)
}
