//! Cell execution: sample, standardize, train, estimate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scoremi::baselines::{run_baseline, BaselineVariant};
use scoremi::data::PairedSamples;
use scoremi::estimators::{mi_minde_c, mi_minde_j, EstimatorVariant};
use scoremi::score::{
    load_checkpoint, save_checkpoint, train, Checkpoint, CondScoreModel, Flavor, JointScoreModel, ScoreArch,
    ScoreModel, TrainConfig,
};
use scoremi::tasks::{Standardizer, TaskSpec};

use crate::config::{CellSettings, Method};
use crate::records::{load_existing, write_records, CellKey, ResultRecord, Status};
use crate::seeding::{derive_seed, TEST_DATA, TRAIN_DATA};
use crate::CliError;

/// Methods that share one trained model or critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unit {
    Cond,
    Joint,
    Baseline(BaselineVariant),
}

struct Job<'a> {
    task: &'a TaskSpec,
    seed: u64,
    unit: Unit,
    /// `(method, σ)` outputs still missing.
    outputs: Vec<(Method, Option<f64>)>,
}

/// What a cell grid needs besides its tasks.
pub struct Grid<'a> {
    pub methods: &'a [Method],
    pub seeds: &'a [u64],
    pub sigmas: &'a [f64],
    pub settings: &'a CellSettings,
    pub workers: usize,
}

pub struct RunOutcome {
    /// Every cell of the grid in canonical order (task, method, seed, σ).
    pub records: Vec<ResultRecord>,
    pub computed: usize,
    pub reused: usize,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }
}

fn outputs_for(methods: &[Method], sigmas: &[f64], unit: Unit) -> Vec<(Method, Option<f64>)> {
    let mut out = Vec::new();
    for &m in methods {
        let belongs = match (m, unit) {
            (Method::Minde(v), Unit::Cond) => !v.is_joint(),
            (Method::Minde(v), Unit::Joint) => v.is_joint(),
            (Method::Baseline(b), Unit::Baseline(u)) => b == u,
            _ => false,
        };
        if belongs {
            if m.needs_sigma() {
                out.extend(sigmas.iter().map(|s| (m, Some(*s))));
            } else {
                out.push((m, None));
            }
        }
    }
    out
}

fn units(methods: &[Method]) -> Vec<Unit> {
    let mut out = Vec::new();
    for m in methods {
        let u = match m {
            Method::Minde(v) if v.is_joint() => Unit::Joint,
            Method::Minde(_) => Unit::Cond,
            Method::Baseline(b) => Unit::Baseline(*b),
        };
        if !out.contains(&u) {
            out.push(u);
        }
    }
    out
}

fn rng(task: &str, seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(task, seed, purpose))
}

/// Standardized `(train, test)` for a task and seed; identical for every method.
pub fn cell_data(task: &TaskSpec, seed: u64, settings: &CellSettings) -> Result<(PairedSamples, PairedSamples), CliError> {
    let train = task.sample(settings.n_train, &mut rng(&task.id, seed, TRAIN_DATA))?;
    let test = task.sample(settings.n_test, &mut rng(&task.id, seed, TEST_DATA))?;
    let (train, map) = Standardizer::fit_apply(&train)?;
    Ok((train, map.apply(&test)?))
}

fn arch(settings: &CellSettings, flavor: Flavor, data: &PairedSamples) -> ScoreArch {
    ScoreArch {
        flavor,
        x_dim: data.x_dim(),
        y_dim: data.y_dim(),
        width: settings.arch.width,
        blocks: settings.arch.blocks,
        time_embed_dim: settings.arch.time_embed_dim,
    }
}

fn train_config(settings: &CellSettings, task: &str, seed: u64, purpose: &str) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(task, seed, purpose),
        ..settings.train.clone()
    }
}

/// Loads a cached checkpoint or trains and caches a model.
fn obtain<M, F>(
    path: Option<&Path>,
    fresh: M,
    data: &PairedSamples,
    cfg: &TrainConfig,
    unpack: F,
) -> Result<M, CliError>
where
    M: ScoreModel,
    F: Fn(Checkpoint) -> Option<M>,
{
    if let Some(p) = path.filter(|p| p.exists()) {
        match load_checkpoint(p).map(&unpack) {
            Ok(Some(m)) if m.arch() == fresh.arch() && m.iterations() == cfg.iterations => {
                log::info!("reusing {}", p.display());
                return Ok(m);
            }
            _ => log::warn!("ignoring stale checkpoint {}", p.display()),
        }
    }
    let (model, report) = train(fresh, data, cfg).map_err(|e| CliError::Cell(e.to_string()))?;
    log::info!(
        "trained {} iterations, final validation loss {:.4}",
        report.iterations,
        report.final_validation_ema.unwrap_or(f64::NAN)
    );
    if let Some(p) = path {
        save_checkpoint(&model, p)?;
    }
    Ok(model)
}

fn run_job(job: &Job, settings: &CellSettings, hash: &str, models_dir: Option<&Path>) -> Vec<ResultRecord> {
    let start = Instant::now();
    let (task, seed) = (job.task, job.seed);
    let gt = task.ground_truth().map(|g| g.mi).unwrap_or(f64::NAN);
    let record = |(m, sigma): (Method, Option<f64>), res: Result<(f64, f64), CliError>, t: f64| {
        let (estimate, std_error, status, error) = match res {
            Ok((e, s)) => (Some(e), Some(s), Status::Ok, String::new()),
            Err(e) => (None, None, Status::Failed, e.to_string()),
        };
        ResultRecord {
            task: task.id.clone(),
            method: m.id(),
            seed,
            sigma,
            estimate,
            std_error,
            gt,
            n_test: settings.n_test,
            config_hash: hash.to_string(),
            status,
            error,
            wall_time_s: t,
        }
    };
    let ckpt = |flavor: &str| models_dir.map(|d| d.join(format!("{}-s{seed}-{flavor}-{hash}.ckpt", task.id)));

    let prepared = cell_data(task, seed, settings);
    let (train_set, test) = match prepared {
        Ok(d) => d,
        Err(e) => {
            let msg = e.to_string();
            return job
                .outputs
                .iter()
                .map(|o| record(*o, Err(CliError::Cell(msg.clone())), start.elapsed().as_secs_f64()))
                .collect();
        }
    };

    let estimate = |m: Method, sigma: Option<f64>, model: &dyn Fn(EstimatorVariant, Option<f64>, &mut ChaCha8Rng) -> Result<(f64, f64), CliError>| {
        let purpose = match sigma {
            Some(s) => format!("mc-{}-{s}", m.id()),
            None => format!("mc-{}", m.id()),
        };
        let Method::Minde(v) = m else { unreachable!("only MINDE methods use models") };
        model(v, sigma, &mut rng(&task.id, seed, &purpose))
    };

    let results: Vec<Result<(f64, f64), CliError>> = match job.unit {
        Unit::Cond => {
            let fresh = CondScoreModel::new(
                arch(settings, Flavor::Conditional, &train_set),
                settings.schedule,
                derive_seed(&task.id, seed, "cond-model"),
            );
            let model = fresh.map_err(CliError::from).and_then(|fresh| {
                obtain(
                    ckpt("cond").as_deref(),
                    fresh,
                    &train_set,
                    &train_config(settings, &task.id, seed, "cond-train"),
                    |c| match c {
                        Checkpoint::Conditional(m) => Some(m),
                        _ => None,
                    },
                )
            });
            match model {
                Ok(model) => job
                    .outputs
                    .iter()
                    .map(|&(m, s)| {
                        estimate(m, s, &|v, s, r| {
                            let e = mi_minde_c(&model, &test, v, s, &settings.mc, r)?;
                            Ok((e.mean, e.std_error))
                        })
                    })
                    .collect(),
                Err(e) => job.outputs.iter().map(|_| Err(CliError::Cell(e.to_string()))).collect(),
            }
        }
        Unit::Joint => {
            let fresh = JointScoreModel::new(
                arch(settings, Flavor::Joint, &train_set),
                settings.schedule,
                derive_seed(&task.id, seed, "joint-model"),
            );
            let model = fresh.map_err(CliError::from).and_then(|fresh| {
                obtain(
                    ckpt("joint").as_deref(),
                    fresh,
                    &train_set,
                    &train_config(settings, &task.id, seed, "joint-train"),
                    |c| match c {
                        Checkpoint::Joint(m) => Some(m),
                        _ => None,
                    },
                )
            });
            match model {
                Ok(model) => job
                    .outputs
                    .iter()
                    .map(|&(m, s)| {
                        estimate(m, s, &|v, s, r| {
                            let e = mi_minde_j(&model, &test, v, s, &settings.mc, r)?;
                            Ok((e.mean, e.std_error))
                        })
                    })
                    .collect(),
                Err(e) => job.outputs.iter().map(|_| Err(CliError::Cell(e.to_string()))).collect(),
            }
        }
        Unit::Baseline(b) => {
            let mut critic = settings.critic.clone();
            critic.seed = derive_seed(&task.id, seed, &format!("critic-{}", b.id()));
            let res = run_baseline(b, &train_set, &test, &critic)
                .map(|e| (e.mean, e.std_error))
                .map_err(CliError::from);
            vec![res]
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    job.outputs
        .iter()
        .zip(results)
        .map(|(o, r)| record(*o, r, elapsed))
        .collect()
}

/// Runs every missing cell of `tasks × grid`, reusing records (and cached
/// checkpoints under `out_dir/models`) computed with the same settings hash.
pub fn execute(tasks: &[TaskSpec], grid: &Grid, out_dir: Option<&Path>) -> Result<RunOutcome, CliError> {
    let hash = grid.settings.hash();
    let existing: BTreeMap<CellKey, ResultRecord> = match out_dir {
        Some(d) => load_existing(&d.join("records.csv"))?,
        None => BTreeMap::new(),
    };
    let models_dir: Option<PathBuf> = out_dir.map(|d| d.join("models"));
    if let Some(d) = &models_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::Io(d.display().to_string(), e))?;
    }
    let reusable = |task: &str, m: Method, seed: u64, sigma: Option<f64>| {
        existing
            .get(&(task.to_string(), m.id(), seed, sigma.map(f64::to_bits)))
            .filter(|r| r.is_ok() && r.config_hash == hash)
            .cloned()
    };

    let mut jobs = Vec::new();
    let mut done: BTreeMap<CellKey, ResultRecord> = BTreeMap::new();
    for task in tasks {
        for &seed in grid.seeds {
            for unit in units(grid.methods) {
                let mut outputs = Vec::new();
                for (m, s) in outputs_for(grid.methods, grid.sigmas, unit) {
                    match reusable(&task.id, m, seed, s) {
                        Some(r) => {
                            done.insert(r.key(), r);
                        }
                        None => outputs.push((m, s)),
                    }
                }
                if !outputs.is_empty() {
                    jobs.push(Job {
                        task,
                        seed,
                        unit,
                        outputs,
                    });
                }
            }
        }
    }
    let reused = done.len();

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Vec<ResultRecord>>();
    let workers = grid.workers.min(jobs.len()).max(1);
    let mut computed = 0;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, hash, models_dir) = (&jobs, &next, &hash, models_dir.as_deref());
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                log::info!("cell {}/{}: {} seed {} {:?}", i + 1, jobs.len(), job.task.id, job.seed, job.unit);
                if tx.send(run_job(job, grid.settings, hash, models_dir)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer: collect in arrival order, sorted below
        for batch in rx {
            for r in batch {
                if !r.is_ok() {
                    log::error!("{} {} seed {}: {}", r.task, r.method, r.seed, r.error);
                }
                computed += 1;
                done.insert(r.key(), r);
            }
            // checkpoint progress so an interrupted run resumes from here
            if let Some(d) = out_dir {
                let partial: Vec<ResultRecord> = done.values().cloned().collect();
                if let Err(e) = write_records(&d.join("records.csv"), &partial) {
                    log::warn!("could not save progress: {e}");
                }
            }
        }
    });

    // canonical order: task list, then method list, then seed list, then σ list
    let mut records = Vec::with_capacity(done.len());
    for task in tasks {
        for &m in grid.methods {
            for &seed in grid.seeds {
                let sigmas: Vec<Option<f64>> = if m.needs_sigma() {
                    grid.sigmas.iter().map(|s| Some(*s)).collect()
                } else {
                    vec![None]
                };
                for s in sigmas {
                    if let Some(r) = done.remove(&(task.id.clone(), m.id(), seed, s.map(f64::to_bits))) {
                        records.push(r);
                    }
                }
            }
        }
    }
    Ok(RunOutcome {
        records,
        computed,
        reused,
    })
}
