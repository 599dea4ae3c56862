use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scoremi::estimators::EstimatorVariant;
use scoremi_cli::config::{RunConfig, SweepConfig};
use scoremi_cli::{parse_seeds, resolve_output_dir, run, selftest, sweep, table_for_dir, CliError, Overrides};

#[derive(Parser)]
#[command(name = "scoremi", version, about = "Score-based mutual information benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Seed count ("5" = 0..5) or comma list ("1,4,9").
    #[arg(long)]
    seeds: Option<String>,
    /// Cap training at 50k iterations and skip tasks wider than 10 dims.
    #[arg(long)]
    desk_scale: bool,
    /// Keep only these MINDE variants (cond, cond-sigma, joint, joint-sigma).
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<String>>,
    /// Reference σ values for the σ variants.
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
}

impl Common {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let variants = match &self.variant {
            Some(vs) => Some(
                vs.iter()
                    .map(|v| EstimatorVariant::from_id(v).ok_or_else(|| CliError::Config(format!("unknown variant {v:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        Ok(Overrides {
            seeds: self.seeds.as_deref().map(parse_seeds).transpose()?,
            desk_scale: self.desk_scale,
            variants,
            sigmas: self.sigma.clone(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every (task, method, seed) cell of a config, skipping finished ones.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render the table of a results directory.
    Table { dir: PathBuf },
    /// High-MI sweep over the sparse multivariate normal.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Analytic-oracle estimator checks (no training).
    Selftest {
        /// Samples per check.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config, common } => {
            let mut cfg = RunConfig::from_path(&config)?;
            let o = common.overrides()?;
            o.apply(&mut cfg);
            let dir = resolve_output_dir(cfg.name.as_deref(), cfg.output_dir.as_deref());
            let (summary, _) = run(&cfg, o.desk_scale, &dir)?;
            print!("{}", std::fs::read_to_string(dir.join("table.txt")).unwrap_or_default());
            println!(
                "{} records ({} computed, {} reused, {} failed) in {}; config {}",
                summary.records, summary.computed, summary.reused, summary.failures, summary.output_dir, summary.config_hash
            );
            Ok(if summary.failures > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Table { dir } => {
            let t = table_for_dir(&dir)?;
            std::fs::write(dir.join("table.txt"), &t.text).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
            scoremi_cli::table::write_table_csv(&dir.join("table.csv"), &t.cells)?;
            print!("{}", t.text);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, common } => {
            let mut cfg = SweepConfig::from_path(&config)?;
            common.overrides()?.apply_sweep(&mut cfg);
            let dir = resolve_output_dir(cfg.name.as_deref(), cfg.output_dir.as_deref());
            let out = sweep::run_sweep(&cfg, &dir)?;
            for p in &out.points {
                println!("GT {:.3}  {:<14} {:.3} ± {:.3}", p.gt, p.method, p.estimate, p.std_error);
            }
            let failed = out.records.iter().filter(|r| !r.is_ok()).count();
            Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Selftest { draws } => {
            let checks = selftest::selftest(draws)?;
            for c in &checks {
                println!("{}", c.line());
            }
            Ok(if checks.iter().all(|c| c.passed()) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
