use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hamlearn_harness::config::ExperimentConfig;
use hamlearn_harness::datasets::{self, SequenceTask};
use hamlearn_harness::experiment::{compare_curves, run_experiment, write_outputs};
use hamlearn_harness::HarnessError;
use rayon::prelude::*;

const EXIT_TOLERANCE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "hamlearn", version, about = "Hamiltonian learning experiments and parity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunOptions {
    /// Directory for run outputs (overrides the config).
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    /// Model and shuffle seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Pass/fail threshold (overrides the config).
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltIn {
    Iris,
    Digits,
    Sequences,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and its oracle.
    Run {
        #[arg(long, short = 'c')]
        config: PathBuf,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Compare the loss columns of two CSV logs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Run several experiments in parallel.
    Sweep {
        /// Config files, or directories whose `*.toml` files are all run.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOptions,
    },
    /// Write a built-in dataset to CSV (tables) or JSON lines (sequences).
    Export {
        dataset: BuiltIn,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path, opts: &RunOptions) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = opts.tolerance {
        cfg.tolerance.value = tol;
    }
    if let Some(dir) = &opts.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    Ok(cfg)
}

/// Runs one config; `Ok(pass)` or an error.
fn run_one(path: &Path, opts: &RunOptions) -> Result<bool, HarnessError> {
    let cfg = load(path, opts)?;
    let result = run_experiment(&cfg)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let paths = write_outputs(&result, &dir)?;
    let s = &result.summary;
    println!(
        "{} {}: steps={} max|dθ|={:e} mean|dθ|={:e} loss_gap={:e} -> {} ({})",
        if s.pass { "PASS" } else { "FAIL" },
        s.name,
        s.steps,
        s.max_abs_dtheta,
        s.max_mean_abs_dtheta,
        s.max_loss_gap,
        paths.summary.display(),
        s.scenario,
    );
    Ok(s.pass)
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| HarnessError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "toml"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn exit_for(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, opts } => match run_one(&config, &opts) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_TOLERANCE),
            Err(e) => exit_for(&e),
        },
        Command::Compare { a, b, tolerance } => match compare_curves(&a, &b, tolerance) {
            Ok(report) => {
                match report.first_offending {
                    None => println!("PASS rows={} max_gap={:e}", report.rows, report.max_gap),
                    Some(i) => {
                        println!("FAIL rows={} max_gap={:e} first_offending_row={i}", report.rows, report.max_gap)
                    }
                }
                if report.pass {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_TOLERANCE)
                }
            }
            Err(e) => exit_for(&e),
        },
        Command::Sweep { configs, opts } => {
            let paths = match expand(&configs) {
                Ok(p) => p,
                Err(e) => return exit_for(&e),
            };
            let results: Vec<_> = paths.par_iter().map(|p| (p, run_one(p, &opts))).collect();
            let mut code = ExitCode::SUCCESS;
            for (p, r) in &results {
                match r {
                    Ok(true) => {}
                    Ok(false) => {
                        if code == ExitCode::SUCCESS {
                            code = ExitCode::from(EXIT_TOLERANCE);
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {}: {e}", p.display());
                        code = ExitCode::from(EXIT_CONFIG);
                    }
                }
            }
            code
        }
        Command::Export { dataset, out, seed } => {
            let res = match dataset {
                BuiltIn::Iris => datasets::write_table_csv(&datasets::iris_like(seed), &out),
                BuiltIn::Digits => datasets::write_table_csv(&datasets::digits_like(seed), &out),
                BuiltIn::Sequences => datasets::token_sequences(seed, SequenceTask::default())
                    .and_then(|s| datasets::write_sequences_jsonl(&s, &out)),
            };
            match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => exit_for(&e),
            }
        }
    }
}
