use std::path::Path;
use std::process::Command;

use scoremi::tasks::{find_task, sparse_task, Base, Catalogue};
use scoremi_cli::config::{CellSettings, Method, RunConfig, SweepConfig};
use scoremi_cli::records::{read_records, ResultRecord, Status};
use scoremi_cli::seeding::derive_seed;
use scoremi_cli::table::{quantize, render_cell, render_table};
use scoremi_cli::{parse_seeds, run, select_tasks, sweep, CliError, Overrides};

fn tiny() -> CellSettings {
    let mut s = CellSettings {
        n_train: 300,
        n_test: 100,
        ..Default::default()
    };
    s.train.iterations = 20;
    s.train.eval_every = 10;
    s.mc.runs = 1;
    s.critic.max_steps = 20;
    s.critic.eval_every = 10;
    s
}

fn config(tasks: &[&str], methods: &[&str], seeds: &[u64]) -> RunConfig {
    RunConfig {
        name: Some("t".into()),
        tasks: tasks.iter().map(|s| s.to_string()).collect(),
        methods: methods.iter().map(|m| Method::parse(m).unwrap()).collect(),
        seeds: seeds.to_vec(),
        sigmas: vec![1.0],
        settings: tiny(),
        output_dir: None,
        workers: 1,
    }
}

fn record(task: &str, method: &str, seed: u64, estimate: f64, gt: f64) -> ResultRecord {
    ResultRecord {
        task: task.into(),
        method: method.into(),
        seed,
        sigma: None,
        estimate: Some(estimate),
        std_error: Some(0.01),
        gt,
        n_test: 10,
        config_hash: "h".into(),
        status: Status::Ok,
        error: String::new(),
        wall_time_s: 0.0,
    }
}

#[test]
fn one_cell_config_gives_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&["bivariate-1x1"], &["minde-c"], &[0]);
    let (summary, records) = run(&cfg, false, dir.path()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(summary.computed, 1);
    let r = &records[0];
    assert_eq!((r.task.as_str(), r.method.as_str(), r.seed), ("bivariate-1x1", "minde-c", 0));
    assert!(r.is_ok(), "{}", r.error);
    let gt = Catalogue::build().unwrap().get("bivariate-1x1").unwrap().ground_truth.mi;
    assert_eq!(r.gt, gt);
    for f in ["records.csv", "timings.csv", "tasks.json", "table.txt", "table.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // wall time lives in timings.csv only
    let stripped: Vec<ResultRecord> = records.iter().map(|r| ResultRecord { wall_time_s: 0.0, ..r.clone() }).collect();
    assert_eq!(read_records(&dir.path().join("records.csv")).unwrap(), stripped);
}

#[test]
fn rerun_reuses_every_cell_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&["bivariate-1x1"], &["minde-c", "minde-j-sigma", "nwj"], &[0, 1]);
    let (first, a) = run(&cfg, false, dir.path()).unwrap();
    assert_eq!((first.computed, first.reused), (6, 0));
    let models = std::fs::read_dir(dir.path().join("models")).unwrap().count();
    assert_eq!(models, 4);
    let (second, b) = run(&cfg, false, dir.path()).unwrap();
    assert_eq!((second.computed, second.reused), (0, 6));
    assert_eq!(a, b);

    // a new seed computes only its own cells
    let mut more = cfg.clone();
    more.seeds = vec![0, 1, 2];
    let (third, _) = run(&more, false, dir.path()).unwrap();
    assert_eq!((third.computed, third.reused), (3, 6));
}

#[test]
fn changed_settings_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&["bivariate-1x1"], &["minde-c"], &[0]);
    run(&cfg, false, dir.path()).unwrap();
    cfg.settings.mc.runs = 2;
    let (s, _) = run(&cfg, false, dir.path()).unwrap();
    assert_eq!((s.computed, s.reused), (1, 0));
}

#[test]
fn identical_configs_write_identical_records() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config(&["bivariate-1x1", "uniform-1x1-noise0.75"], &["minde-c", "minde-j", "dv", "ksg"], &[3]);
    run(&cfg, false, a.path()).unwrap();
    run(&cfg, false, b.path()).unwrap();
    for f in ["records.csv", "table.csv", "table.txt"] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn workers_do_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = config(&["bivariate-1x1"], &["minde-c", "mine"], &[0, 1]);
    run(&cfg, false, a.path()).unwrap();
    cfg.workers = 3;
    run(&cfg, false, b.path()).unwrap();
    assert_eq!(
        std::fs::read(a.path().join("records.csv")).unwrap(),
        std::fs::read(b.path().join("records.csv")).unwrap()
    );
}

#[test]
fn cell_rendering_quantizes_and_marks_bias() {
    assert_eq!(render_cell(0.97, 1.0), "1.0");
    assert_eq!(render_cell(0.84, 1.0), "0.8 (−)");
    assert_eq!(render_cell(1.16, 1.0), "1.2 (+)");
    assert_eq!(render_cell(0.224, 0.2), "0.2");
    assert_eq!(quantize(1.709), 1.7);
}

#[test]
fn table_columns_follow_catalogue_order() {
    let cat = Catalogue::build().unwrap();
    let tasks: Vec<_> = cat.tasks.iter().map(|e| e.spec.clone()).collect();
    let (first, later) = (&tasks[0], &tasks[5]);
    // records arrive in the opposite order
    let records = vec![
        record(&later.id, "minde-c", 0, 0.84, 1.0),
        record(&later.id, "minde-c", 1, 0.82, 1.0),
        record(&first.id, "minde-c", 0, 0.4, 0.4),
    ];
    let table = render_table(&records, &tasks).unwrap();
    let header = table.text.lines().next().unwrap();
    let (i, j) = (header.find(&first.name).unwrap(), header.find(&later.name).unwrap());
    assert!(i < j, "{header}");
    let cell = table.cells.iter().find(|c| c.task == later.id).unwrap();
    assert_eq!(cell.n_seeds, 2);
    assert!((cell.mean - 0.83).abs() < 1e-12);
    assert_eq!(cell.rendered, "0.8 (−)");
    assert!(matches!(render_table(&[], &tasks), Err(CliError::NoRecords)));
}

#[test]
fn failed_cells_are_recorded_and_rendered() {
    let cat = Catalogue::build().unwrap();
    let tasks: Vec<_> = cat.tasks.iter().map(|e| e.spec.clone()).collect();
    let mut r = record(&tasks[0].id, "nwj", 0, 0.0, 0.4);
    r.status = Status::Failed;
    r.estimate = None;
    let table = render_table(&[r], &tasks).unwrap();
    assert!(table.text.contains("fail"));
    assert!(table.cells.is_empty());
}

#[test]
fn seeds_parse_as_count_or_list() {
    assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
    assert_eq!(parse_seeds("1, 4,9").unwrap(), vec![1, 4, 9]);
    assert!(parse_seeds("x").is_err());
}

#[test]
fn desk_scale_drops_wide_tasks_and_caps_iterations() {
    let ids: Vec<String> = ["mn-25x25-dense", "mn-3x3-2pair", "bivariate-1x1"].iter().map(|s| s.to_string()).collect();
    let kept: Vec<String> = select_tasks(&ids, true).unwrap().into_iter().map(|t| t.id).collect();
    assert_eq!(kept, vec!["bivariate-1x1", "mn-3x3-2pair"]);
    assert_eq!(select_tasks(&ids, false).unwrap().len(), 3);
    assert!(select_tasks(&["nope".to_string()], false).is_err());

    let mut cfg = config(&["bivariate-1x1"], &["minde-c"], &[0]);
    cfg.settings.train.iterations = 200_000;
    Overrides {
        desk_scale: true,
        seeds: Some(vec![4]),
        ..Default::default()
    }
    .apply(&mut cfg);
    assert_eq!(cfg.settings.train.iterations, 50_000);
    assert_eq!(cfg.seeds, vec![4]);
}

#[test]
fn config_validation() {
    let mut cfg = config(&["bivariate-1x1"], &["minde-c"], &[0, 0]);
    assert!(cfg.validate().is_err());
    cfg.seeds = vec![0];
    cfg.validate().unwrap();
    cfg.sigmas = vec![-1.0];
    assert!(cfg.validate().is_err());
    assert!(Method::parse("minde-x").is_err());
    for m in ["minde-c", "minde-c-sigma", "minde-j", "minde-j-sigma", "mine", "dv", "nwj", "infonce", "ksg10"] {
        assert_eq!(Method::parse(m).unwrap().id(), m);
    }
}

#[test]
fn config_file_defaults_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.json");
    std::fs::write(&path, r#"{"tasks": ["bivariate-1x1"], "train": {"iterations": 10}}"#).unwrap();
    let cfg = RunConfig::from_path(&path).unwrap();
    assert_eq!(cfg.name.as_deref(), Some("small"));
    assert_eq!(cfg.seeds, (0..10).collect::<Vec<_>>());
    assert_eq!(cfg.methods.len(), 8);
    assert_eq!(cfg.settings.n_train, 100_000);
    assert_eq!(cfg.settings.train.iterations, 10);
    assert_eq!(cfg.settings.train.batch_size, 128);
    let h = cfg.settings.hash();
    assert_eq!(h.len(), 16);
    assert_eq!(h, cfg.clone().settings.hash());
    let mut other = cfg.settings.clone();
    other.n_test += 1;
    assert_ne!(h, other.hash());
}

#[test]
fn derived_seeds_are_stable_and_distinct() {
    let a = derive_seed("bivariate-1x1", 0, "train-data");
    assert_eq!(a, derive_seed("bivariate-1x1", 0, "train-data"));
    assert_ne!(a, derive_seed("bivariate-1x1", 1, "train-data"));
    assert_ne!(a, derive_seed("bivariate-1x1", 0, "test-data"));
    assert_ne!(a, derive_seed("mn-2x2-dense", 0, "train-data"));
}

#[test]
fn sweep_solves_targets_and_writes_plot_data() {
    let task = sparse_task(3, 3, 2, 0.0, vec![]).unwrap();
    match &task.base {
        Base::Multinormal { cov, .. } => assert_eq!(cov.lambda, 0.0),
        b => panic!("unexpected base {b:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = SweepConfig {
        name: None,
        targets: vec![0.0, 1.0],
        x_dim: 3,
        y_dim: 3,
        pairs: 2,
        transform: Default::default(),
        methods: vec![Method::parse("minde-c").unwrap()],
        seeds: vec![0],
        sigmas: vec![1.0],
        settings: tiny(),
        output_dir: None,
        workers: 1,
    };
    let out = sweep::run_sweep(&cfg, dir.path()).unwrap();
    assert_eq!(out.points.len(), 2);
    assert_eq!(out.points[0].gt, 0.0);
    assert!((out.points[1].gt - 1.0).abs() < 1e-7);
    assert!(dir.path().join("plot_data.csv").exists());
}

fn scoremi(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scoremi"))
        .args(args)
        .env("SCOREMI_OUTPUT_ROOT", root)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn binary_runs_a_config_and_renders_its_table() {
    let root = tempfile::tempdir().unwrap();
    let path = root.path().join("smoke.json");
    let mut cfg = config(&["hc-bivariate-1x1", "bivariate-1x1"], &["minde-c", "ksg"], &[0]);
    cfg.name = None;
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = scoremi(&["run", path.to_str().unwrap(), "--seeds", "1"], root.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let bivariate = find_task("bivariate-1x1").unwrap().name;
    let hc = find_task("hc-bivariate-1x1").unwrap().name;
    assert!(stdout.find(&bivariate).unwrap() < stdout.find(&hc).unwrap(), "{stdout}");
    assert!(stdout.contains("4 records (4 computed"), "{stdout}");

    let dir = root.path().join("smoke");
    let table = scoremi(&["table", dir.to_str().unwrap()], root.path());
    assert!(table.status.success());
    assert_eq!(
        String::from_utf8(table.stdout).unwrap(),
        std::fs::read_to_string(dir.join("table.txt")).unwrap()
    );
    assert!(!scoremi(&["run", "/does/not/exist.json"], root.path()).status.success());
}

#[test]
fn shipped_configs_parse_and_name_catalogue_tasks() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let catalogue = Catalogue::build().unwrap();
    for name in ["smoke", "desk", "table1"] {
        let cfg = RunConfig::from_path(&dir.join(format!("{name}.json"))).unwrap();
        cfg.validate().unwrap();
        assert_eq!(select_tasks(&cfg.tasks, false).unwrap().len(), cfg.tasks.len(), "{name}");
        assert_eq!(cfg.name.as_deref(), Some(name));
    }
    let all = RunConfig::from_path(&dir.join("table1.json")).unwrap();
    assert_eq!(all.tasks.len(), catalogue.tasks.len());
    assert_eq!(all.seeds, (0..10).collect::<Vec<u64>>());
    for name in ["sweep", "sweep-spiral"] {
        let cfg = SweepConfig::from_path(&dir.join(format!("{name}.json"))).unwrap();
        assert_eq!(cfg.targets, vec![0.5, 1.0, 2.0]);
    }
}
