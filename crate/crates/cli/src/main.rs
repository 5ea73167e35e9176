//! `slmc`: run self-learning Monte Carlo experiments, the validation suite
//! and the sampler benchmark.
//!
//! Exit codes: 0 success, 1 failed run or validation, 2 usage or config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use slmc::harness::{self, bench, default_output_root, validate, ExperimentConfig, OUTPUT_ROOT_ENV};
use slmc::SlmcError;

#[derive(Parser)]
#[command(name = "slmc", version, about = "Self-learning Metropolis-Hastings with a Fourier proposal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one or more experiment configs.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output root; each run writes to `<root>/<name>`.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        out: Option<PathBuf>,
        /// Configs run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in oracle suite.
    Validate {
        /// Also parse this grid-target file.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Scale the parameter vector before the normalization check.
        #[arg(long, default_value_t = 1.0, hide = true)]
        theta_scale: f64,
    },
    /// Time the adaptive sampler against the full-table baseline.
    Bench {
        /// Comma-separated register widths.
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 12, 16, 20, 24, 32, 64, 100])]
        qubits: Vec<u32>,
        #[arg(long, default_value_t = 4)]
        m: u32,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize `metrics.csv` of a finished run.
    Metrics {
        run_dir: PathBuf,
        /// Fraction of rows averaged at each end.
        #[arg(long, default_value_t = 0.1)]
        window: f64,
    },
}

const USAGE: u8 = 2;
const FAILURE: u8 = 1;

fn report(err: &SlmcError) -> u8 {
    eprintln!("error: {err}");
    match err {
        SlmcError::Config { .. } | SlmcError::Parse { .. } => USAGE,
        _ => FAILURE,
    }
}

fn run(configs: Vec<PathBuf>, out: Option<PathBuf>, jobs: usize) -> u8 {
    let mut loaded = Vec::new();
    for path in &configs {
        match ExperimentConfig::load(path) {
            Ok(c) => loaded.push(c),
            Err(e) => {
                // An unreadable config is a usage error like a malformed one.
                eprintln!("{}: error: {e}", path.display());
                return USAGE;
            }
        }
    }
    let root = out.unwrap_or_else(default_output_root);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return FAILURE;
        }
    };
    let codes: Vec<u8> = pool.install(|| {
        loaded
            .par_iter()
            .map(|cfg| match harness::run_experiment(cfg, &root.join(&cfg.name)) {
                Ok(s) => {
                    let last = s.rows.last();
                    println!(
                        "{}: {} steps, final cross_entropy {}, final acceptance_ratio {}, output {}",
                        cfg.name,
                        cfg.train.steps,
                        last.map_or(f64::NAN, |r| r.cross_entropy),
                        last.map_or(f64::NAN, |r| r.acceptance_ratio),
                        s.out_dir.display()
                    );
                    0
                }
                Err(e) => {
                    eprint!("{}: ", cfg.name);
                    report(&e)
                }
            })
            .collect()
    });
    codes.into_iter().max().unwrap_or(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { configs, out, jobs } => run(configs, out, jobs),
        Command::Validate { grid, seed, theta_scale } => {
            let results = validate::run_validation(&validate::ValidateOptions {
                seed,
                grid_file: grid,
                theta_scale,
            });
            print!("{}", validate::format_table(&results));
            if results.iter().all(|r| r.passed) {
                0
            } else {
                FAILURE
            }
        }
        Command::Bench { qubits, m, draws, seed } => match bench::bench(&qubits, m, draws, seed) {
            Ok(rows) => {
                print!("{}", bench::format_report(&rows));
                0
            }
            Err(e) => report(&e),
        },
        Command::Metrics { run_dir, window } => match harness::read_metrics(&run_dir) {
            Ok(rows) => {
                print!("{}", harness::metrics_report(&rows, window));
                0
            }
            Err(e) => report(&e),
        },
    };
    ExitCode::from(code)
}
