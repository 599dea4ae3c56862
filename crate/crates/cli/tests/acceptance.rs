//! End-to-end acceptance run. Prints one pass/fail line per criterion and
//! exits non-zero if any fails.
//!
//! Trained models and records are cached under `SCOREMI_ACCEPTANCE_DIR`
//! (default: the cargo target tmpdir), so only the first run pays for
//! training. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use scoremi::baselines::BaselineVariant;
use scoremi::data::PairedSamples;
use scoremi::estimators::{mi_minde_c, EstimatorVariant, McConfig};
use scoremi::nn::{Gradients, ParamStore, Tape};
use scoremi::score::{
    load_checkpoint, save_checkpoint, train, weighted_noise_loss, Checkpoint, CondScoreModel, Flavor, JointScoreModel,
    ScoreArch, ScoreModel, TrainConfig,
};
use scoremi::sde::{TimeProposal, TimeSampler, VpSchedule};
use scoremi::tasks::*;
use scoremi_cli::config::{CellSettings, Method, RunConfig};
use scoremi_cli::records::ResultRecord;
use scoremi_cli::selftest::selftest;

type Outcome = Result<(bool, Vec<String>), String>;

const TABLE_TASKS: [&str; 7] = [
    "bivariate-1x1",
    "mn-2x2-dense",
    "mn-3x3-2pair",
    "st-1x1-dof1",
    "uniform-1x1-noise0.75",
    "hc-bivariate-1x1",
    "asinh-st-1x1-dof1",
];
const SIGMAS: [f64; 4] = [0.5, 1.0, 2.0, 5.0];

fn work_dir() -> PathBuf {
    std::env::var_os("SCOREMI_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run_config(name: &str, tasks: &[&str], methods: Vec<Method>, sigmas: Vec<f64>) -> RunConfig {
    RunConfig {
        name: Some(name.into()),
        tasks: tasks.iter().map(|s| s.to_string()).collect(),
        methods,
        seeds: vec![0],
        sigmas,
        settings: CellSettings::default(),
        output_dir: None,
        workers: workers(),
    }
}

fn run_engine(cfg: &RunConfig) -> Result<Vec<ResultRecord>, String> {
    let dir = work_dir().join(cfg.name.as_deref().unwrap_or("run"));
    let (summary, records) = scoremi_cli::run(cfg, false, &dir).map_err(|e| e.to_string())?;
    eprintln!("  {}: {} computed, {} reused", dir.display(), summary.computed, summary.reused);
    if let Some(bad) = records.iter().find(|r| !r.is_ok()) {
        return Err(format!("{} {} failed: {}", bad.task, bad.method, bad.error));
    }
    Ok(records)
}

fn find<'a>(records: &'a [ResultRecord], task: &str, method: &str, sigma: Option<f64>) -> Result<&'a ResultRecord, String> {
    records
        .iter()
        .find(|r| r.task == task && r.method == method && r.sigma == sigma)
        .ok_or_else(|| format!("no record for {task} {method} {sigma:?}"))
}

fn value(r: &ResultRecord) -> f64 {
    r.estimate.unwrap_or(f64::NAN)
}

/// Criterion 1: closed-form diffused-Gaussian scores at 1e5 draws.
fn analytic_suite() -> Outcome {
    let checks = selftest(100_000).map_err(|e| e.to_string())?;
    let lines: Vec<String> = checks.iter().map(|c| c.line()).collect();
    Ok((checks.iter().all(|c| c.passed()), lines))
}

/// Largest relative gap between tape gradients and central differences over
/// `coords` sampled parameter entries.
fn gradient_gap(net_params: &mut ParamStore, loss: &dyn Fn(&mut Tape, &ParamStore) -> f64, grads: &Gradients, coords: usize, rng: &mut ChaCha8Rng) -> f64 {
    let h = 1e-5;
    let ids: Vec<_> = net_params.ids().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let id = ids[rng.gen_range(0..ids.len())];
        let k = rng.gen_range(0..net_params.get(id).len());
        let orig = net_params.get(id).data()[k];
        net_params.get_mut(id).data_mut()[k] = orig + h;
        let up = loss(&mut Tape::new(), net_params);
        net_params.get_mut(id).data_mut()[k] = orig - h;
        let down = loss(&mut Tape::new(), net_params);
        net_params.get_mut(id).data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(id).data()[k];
        worst = worst.max((analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6));
    }
    worst
}

/// Criterion 2: autodiff against finite differences on the full network.
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sampler = TimeSampler::new(VpSchedule::default(), TimeProposal::Uniform);
    let jitter = Normal::new(0.0, 0.1).expect("valid normal");
    let mut lines = Vec::new();
    let mut worst_all: f64 = 0.0;
    for inst in 0..20 {
        let (dx, dy) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let flavor = if inst % 2 == 0 { Flavor::Conditional } else { Flavor::Joint };
        let arch = ScoreArch::small(flavor, dx, dy);
        let seed = rng.gen();
        let rows = 8;
        let x0 = scoremi::nn::Tensor::matrix(rows, dx, (0..rows * dx).map(|_| rng.sample(jitter) * 10.0).collect())
            .map_err(|e| e.to_string())?;
        let y0 = scoremi::nn::Tensor::matrix(rows, dy, (0..rows * dy).map(|_| rng.sample(jitter) * 10.0).collect())
            .map_err(|e| e.to_string())?;
        let (net, mut params, batch) = match flavor {
            Flavor::Conditional => {
                let m = CondScoreModel::new(arch, VpSchedule::default(), seed).map_err(|e| e.to_string())?;
                let b = m.loss_batch(&x0, &y0, &sampler, 0.5, &mut rng).map_err(|e| e.to_string())?;
                (m.net().clone(), m.params().clone(), b)
            }
            Flavor::Joint => {
                let m = JointScoreModel::new(arch, VpSchedule::default(), seed).map_err(|e| e.to_string())?;
                let b = m.loss_batch(&x0, &y0, &sampler, 0.5, &mut rng).map_err(|e| e.to_string())?;
                (m.net().clone(), m.params().clone(), b)
            }
        };
        // the output head starts at zero, which would hide every upstream gradient
        for t in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += jitter.sample(&mut rng));
        }
        let loss = |tape: &mut Tape, store: &ParamStore| -> f64 {
            let pred = net.forward(tape, store, &batch.input, &batch.t, &batch.flags).expect("forward");
            let l = weighted_noise_loss(tape, pred, &batch).expect("loss");
            tape.value(l).data()[0]
        };
        let mut tape = Tape::new();
        let pred = net
            .forward(&mut tape, &params, &batch.input, &batch.t, &batch.flags)
            .map_err(|e| e.to_string())?;
        let l = weighted_noise_loss(&mut tape, pred, &batch).map_err(|e| e.to_string())?;
        let grads = tape.backward(l, &params).map_err(|e| e.to_string())?;
        let worst = gradient_gap(&mut params, &loss, &grads, 60, &mut rng);
        worst_all = worst_all.max(worst);
        lines.push(format!("{flavor:?} {dx}x{dy}: worst relative error {worst:.2e}"));
    }
    lines.push(format!("overall worst {worst_all:.2e} (limit 1e-5)"));
    Ok((worst_all < 1e-5, lines))
}

fn table_records() -> Result<Vec<ResultRecord>, String> {
    let methods = EstimatorVariant::ALL.into_iter().map(Method::Minde).collect();
    run_engine(&run_config("table", &TABLE_TASKS, methods, SIGMAS.to_vec()))
}

/// Criterion 3: MINDE-c and MINDE-j within 0.15 nats on the desk subset.
fn desk_table() -> Outcome {
    let records = table_records()?;
    let mut ok = true;
    let mut lines = Vec::new();
    for task in TABLE_TASKS {
        for method in ["minde-c", "minde-j"] {
            let r = find(&records, task, method, None)?;
            let err = (value(r) - r.gt).abs();
            let pass = err <= 0.15;
            ok &= pass;
            lines.push(format!(
                "[{}] {task} {method}: {:.3} ± {:.3} vs {:.3} (error {err:.3})",
                if pass { "pass" } else { "FAIL" },
                value(r),
                r.std_error.unwrap_or(f64::NAN),
                r.gt
            ));
        }
    }
    Ok((ok, lines))
}

/// Criterion 4: σ variants agree across reference scales on one model per flavor.
fn sigma_robustness() -> Outcome {
    let records = table_records()?;
    let task = TABLE_TASKS[0];
    let mut ok = true;
    let mut lines = Vec::new();
    for method in ["minde-c-sigma", "minde-j-sigma"] {
        let rs: Vec<&ResultRecord> = SIGMAS.iter().map(|&s| find(&records, task, method, Some(s))).collect::<Result<_, _>>()?;
        let mut worst: f64 = 0.0;
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                let (a, b) = (rs[i], rs[j]);
                let se = (a.std_error.unwrap_or(f64::NAN).powi(2) + b.std_error.unwrap_or(f64::NAN).powi(2)).sqrt();
                worst = worst.max((value(a) - value(b)).abs() / se);
            }
        }
        let pass = worst < 3.0;
        ok &= pass;
        let vals: Vec<String> = rs
            .iter()
            .map(|r| format!("σ={}: {:.3}±{:.3}", r.sigma.unwrap_or(f64::NAN), value(r), r.std_error.unwrap_or(f64::NAN)))
            .collect();
        lines.push(format!(
            "[{}] {task} {method}: {} (largest gap {worst:.2} combined se)",
            if pass { "pass" } else { "FAIL" },
            vals.join(", ")
        ));
    }
    Ok((ok, lines))
}

/// Trains (or loads) a conditional model on standardized `train` and returns
/// its MINDE-c estimate on `test`.
fn minde_c_on(name: &str, train_set: &PairedSamples, test: &PairedSamples, seed: u64) -> Result<(f64, f64), String> {
    let settings = CellSettings::default();
    let (train_set, map) = Standardizer::fit_apply(train_set).map_err(|e| e.to_string())?;
    let test = map.apply(test).map_err(|e| e.to_string())?;
    let arch = ScoreArch {
        flavor: Flavor::Conditional,
        x_dim: train_set.x_dim(),
        y_dim: train_set.y_dim(),
        width: settings.arch.width,
        blocks: settings.arch.blocks,
        time_embed_dim: settings.arch.time_embed_dim,
    };
    let cfg = TrainConfig {
        seed,
        ..settings.train.clone()
    };
    let dir = work_dir().join("consistency");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join(format!("{name}-{}.ckpt", settings.hash()));
    let cached = match load_checkpoint(&path) {
        Ok(Checkpoint::Conditional(m)) if m.iterations() == cfg.iterations && *m.arch() == arch => Some(m),
        _ => None,
    };
    let model = match cached {
        Some(m) => m,
        None => {
            let fresh = CondScoreModel::new(arch, settings.schedule, seed).map_err(|e| e.to_string())?;
            let (m, _) = train(fresh, &train_set, &cfg).map_err(|e| e.to_string())?;
            save_checkpoint(&m, &path).map_err(|e| e.to_string())?;
            m
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let est = mi_minde_c(&model, &test, EstimatorVariant::Cond, None, &McConfig::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    Ok((est.mean, est.std_error))
}

/// Criterion 5: independence, additivity and data processing on Gaussians.
fn self_consistency() -> Outcome {
    let settings = CellSettings::default();
    let base = find_task("bivariate-1x1").map_err(|e| e.to_string())?;
    let draw = |kind: Option<ConsistencyKind>, seed: u64| -> Result<(f64, f64), String> {
        let task = match kind {
            None => None,
            Some(ConsistencyKind::DataProcessing) => {
                let q = random_orthogonal(1, &mut ChaCha8Rng::seed_from_u64(seed));
                Some(ConsistencyTask::data_processing(base.clone(), q).map_err(|e| e.to_string())?)
            }
            Some(k) => Some(ConsistencyTask::new(k, base.clone()).map_err(|e| e.to_string())?),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tr, te) = match &task {
            None => (base.sample(settings.n_train, &mut rng), base.sample(settings.n_test, &mut rng)),
            Some(t) => (t.sample(settings.n_train, &mut rng), t.sample(settings.n_test, &mut rng)),
        };
        let name = match kind {
            None => "base",
            Some(ConsistencyKind::Independence) => "independence",
            Some(ConsistencyKind::Additivity) => "additivity",
            Some(ConsistencyKind::DataProcessing) => "data-processing",
        };
        minde_c_on(name, &tr.map_err(|e| e.to_string())?, &te.map_err(|e| e.to_string())?, seed)
    };
    let (b, b_se) = draw(None, 51)?;
    let (ind, ind_se) = draw(Some(ConsistencyKind::Independence), 52)?;
    let (add, _) = draw(Some(ConsistencyKind::Additivity), 53)?;
    let (dp, _) = draw(Some(ConsistencyKind::DataProcessing), 54)?;
    let checks = [
        ("independence estimate", ind, ind <= 0.05, format!("{ind:.3} ± {ind_se:.3} (≤ 0.05)")),
        ("additivity ratio", add / b, (1.8..=2.2).contains(&(add / b)), format!("{add:.3} / {b:.3} = {:.3} (in [1.8, 2.2])", add / b)),
        ("data-processing ratio", dp / b, (0.9..=1.1).contains(&(dp / b)), format!("{dp:.3} / {b:.3} = {:.3} (in [0.9, 1.1])", dp / b)),
    ];
    let lines = checks
        .iter()
        .map(|(n, _, p, d)| format!("[{}] {n}: {d}", if *p { "pass" } else { "FAIL" }))
        .chain([format!("base MINDE-c {b:.3} ± {b_se:.3}")])
        .collect();
    Ok((checks.iter().all(|c| c.2), lines))
}

/// Criterion 6: neural baselines at GT on two easy tasks, and MINDE-c no
/// worse than NWJ on the spiral task.
fn baseline_parity() -> Outcome {
    let critics: Vec<Method> = BaselineVariant::NEURAL.into_iter().map(Method::Baseline).collect();
    let records = run_engine(&run_config("baselines", &["bivariate-1x1", "mn-2x2-2pair"], critics.clone(), vec![1.0]))?;
    let mut ok = true;
    let mut lines = Vec::new();
    for task in ["bivariate-1x1", "mn-2x2-2pair"] {
        for m in &critics {
            let r = find(&records, task, &m.id(), None)?;
            let err = (value(r) - r.gt).abs();
            let pass = err <= 0.1;
            ok &= pass;
            lines.push(format!(
                "[{}] {task} {}: {:.3} vs {:.3} (error {err:.3})",
                if pass { "pass" } else { "FAIL" },
                m.label(),
                value(r),
                r.gt
            ));
        }
    }
    let task = "sp-mn-3x3-2pair";
    let methods = vec![Method::Minde(EstimatorVariant::Cond), Method::Baseline(BaselineVariant::Nwj)];
    let records = run_engine(&run_config("spiral", &[task], methods, vec![1.0]))?;
    let c = find(&records, task, "minde-c", None)?;
    let n = find(&records, task, "nwj", None)?;
    let (ec, en) = ((value(c) - c.gt).abs(), (value(n) - n.gt).abs());
    let pass = ec <= en;
    ok &= pass;
    lines.push(format!(
        "[{}] {task}: MINDE-c {:.3} (error {ec:.3}) vs NWJ {:.3} (error {en:.3}), GT {:.3}",
        if pass { "pass" } else { "FAIL" },
        value(c),
        value(n),
        c.gt
    ));
    Ok((ok, lines))
}

/// Trapezoid integral of p log(p / p_x p_y) for a zero-mean 2-D Gaussian.
fn quadrature_mi(s11: f64, s12: f64, s22: f64) -> f64 {
    let det = s11 * s22 - s12 * s12;
    let (i11, i12, i22) = (s22 / det, -s12 / det, s11 / det);
    let pdf = |x: f64, y: f64| {
        (-(i11 * x * x + 2.0 * i12 * x * y + i22 * y * y) / 2.0).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    };
    let marg = |x: f64, s: f64| (-(x * x) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
    let (hx, hy) = (12.0 * s11.sqrt() / 1200.0, 12.0 * s22.sqrt() / 1200.0);
    let mut total = 0.0;
    for i in -1200..=1200 {
        let x = i as f64 * hx;
        let px = marg(x, s11);
        for j in -1200..=1200 {
            let y = j as f64 * hy;
            let p = pdf(x, y);
            if p > 0.0 {
                total += p * (p / (px * marg(y, s22))).ln();
            }
        }
    }
    total * hx * hy
}

/// Criterion 7: the closed-form ground-truth engine.
fn ground_truth() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut check = |name: String, pass: bool| {
        ok &= pass;
        lines.push(format!("[{}] {name}", if pass { "pass" } else { "FAIL" }));
    };

    // lnΓ and ψ at half-integers written out by hand
    let g = 0.577_215_664_901_532_9_f64;
    let ln2 = std::f64::consts::LN_2;
    let half_ln_pi = 0.5 * std::f64::consts::PI.ln();
    let f1 = half_ln_pi - 0.5 * (-g - 2.0 * ln2);
    let f3 = half_ln_pi - ln2 - 1.5 * (2.0 - g - 2.0 * ln2);
    let oracle = f1 + f3 - 2.0 * g;
    let c = student_correction(1.0, 1, 1).map_err(|e| e.to_string())?;
    check(
        format!("Student correction c(1,1,1) = {c:.6} (oracle {oracle:.6}, ≈ 0.224)"),
        (c - oracle).abs() < 1e-10 && (c - 0.224).abs() < 5e-4,
    );

    let u = uniform_additive_mi(0.1);
    check(format!("uniform ε=0.1 gives {u:.4} (1.709)"), (u - 1.709).abs() < 5e-4);

    for (s11, s12, s22) in [(1.0, 0.5, 1.0), (2.0, -0.9, 0.7), (0.3, 0.25, 4.0), (1.0, 0.0, 2.0)] {
        let cov = DMatrix::from_row_slice(2, 2, &[s11, s12, s12, s22]);
        let exact = gaussian_mi(&cov, 1, 1).map_err(|e| e.to_string())?;
        let quad = quadrature_mi(s11, s12, s22);
        check(
            format!("Gaussian MI [{s11}, {s12}; {s12}, {s22}]: {exact:.6} vs quadrature {quad:.6}"),
            (exact - quad).abs() < 1e-4,
        );
    }

    let mut chains = 0;
    let mut exact = true;
    for mut spec in catalogue().map_err(|e| e.to_string())? {
        if spec.transforms.is_empty() {
            continue;
        }
        chains += 1;
        let with = spec.ground_truth().map_err(|e| e.to_string())?.mi;
        spec.transforms.clear();
        exact &= spec.ground_truth().map_err(|e| e.to_string())?.mi == with;
    }
    check(format!("ground truth unchanged by all {chains} transform chains"), exact && chains > 0);
    Ok((ok, lines))
}

/// Criterion 8: identical configs give byte-identical CSVs.
fn reproducibility() -> Outcome {
    let mut cfg = run_config("repro", &["bivariate-1x1", "st-1x1-dof1"], vec![], vec![1.0]);
    cfg.methods = ["minde-c", "minde-j-sigma", "nwj"].iter().map(|m| Method::parse(m).expect("known")).collect();
    cfg.seeds = vec![0, 1];
    cfg.settings.n_train = 2_000;
    cfg.settings.n_test = 500;
    cfg.settings.train.iterations = 300;
    cfg.settings.train.eval_every = 100;
    cfg.settings.mc.runs = 2;
    cfg.settings.critic.max_steps = 300;
    cfg.settings.critic.eval_every = 100;
    let mut files: Vec<BTreeMap<&str, Vec<u8>>> = Vec::new();
    for run in ["repro-a", "repro-b"] {
        let dir = work_dir().join(run);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        }
        scoremi_cli::run(&cfg, false, &dir).map_err(|e| e.to_string())?;
        let mut m = BTreeMap::new();
        for f in ["records.csv", "table.csv", "table.txt"] {
            m.insert(f, std::fs::read(dir.join(f)).map_err(|e| e.to_string())?);
        }
        files.push(m);
    }
    let mut ok = true;
    let lines = ["records.csv", "table.csv", "table.txt"]
        .iter()
        .map(|f| {
            let same = files[0][f] == files[1][f];
            ok &= same;
            format!("[{}] {f}: {} bytes, {}", if same { "pass" } else { "FAIL" }, files[0][f].len(), if same { "identical" } else { "different" })
        })
        .collect();
    Ok((ok, lines))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "analytic-oracle estimator suite", analytic_suite),
        (2, "gradient check on the full score network", gradient_check),
        (3, "desk-scale benchmark subset", desk_table),
        (4, "σ-robustness of the entropy variants", sigma_robustness),
        (5, "self-consistency on Gaussians", self_consistency),
        (6, "baseline parity", baseline_parity),
        (7, "ground-truth engine", ground_truth),
        (8, "byte-identical result files", reproducibility),
    ];
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut summary = Vec::new();
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        eprintln!("criterion {id}: {name}");
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok((pass, lines)) => (pass, lines),
            Err(e) => (false, vec![format!("error: {e}")]),
        };
        for l in &detail {
            println!("    {l}");
        }
        let line = format!(
            "criterion {id} ({name}): {} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        summary.push((pass, line));
    }
    println!();
    for (_, line) in &summary {
        println!("{line}");
    }
    if summary.iter().any(|(p, _)| !p) {
        std::process::exit(1);
    }
}
