//! `armada`: config-driven experiment runner for the distillation library.
//!
//! Every subcommand reads the same flat key-value config file (all keys have
//! defaults), writes machine-readable results under one output directory,
//! and is fully deterministic given the config. Exit codes distinguish
//! configuration mistakes (1), runtime/numeric failures (2), and violated
//! verification properties (3).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::Common;
use config::ExperimentConfig;

/// Failure classes, mapped one-to-one onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration or command line (exit 1).
    Config(String),
    /// Training, analysis, or file I/O failed (exit 2).
    Runtime(String),
    /// A verification subcommand found a property violation (exit 3).
    Violation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Violation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Violation(m) => m,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config error",
            CliError::Runtime(_) => "runtime error",
            CliError::Violation(_) => "violation",
        }
    }

    pub fn runtime<E: std::fmt::Display>(e: E) -> CliError {
        CliError::Runtime(e.to_string())
    }

    /// Wraps an I/O failure with the path it happened on.
    pub fn io(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

const AFTER_HELP: &str = "\
CONFIG FILE
  Flat `key = value` lines; `#` starts a comment; every key has a default.
  Sections: task.* (synthetic task), teacher.* (representation source),
  train.* (optimizer and model widths), loss.* (alpha/beta/gamma/tau/variant),
  transform.* (teacher corruption), sweep.* (grids: alpha, beta, gamma,
  variants, sigmas, seeds, reseed), audit.* (seed, instances, tol, pairs).
  An unknown or malformed key fails with its line number (exit 1).

OUTPUT LAYOUT
  Results go to <--out | $ARMADA_OUT | ./armada-runs>/<subcommand>/:
    results.csv   one row per run (finals)
    summary.json  means/stds across seeds plus Welch one-sided t-tests
    <run>/report.json  full per-run record (includes wall-clock timing)
    <run>/epochs.csv   one row per epoch (training curve)
  Run directories are named a{alpha}_b{beta}_g{gamma}_{variant}[_{transform}]_s{seed},
  prefixed by an arm tag (baseline_, aligned_, shuffled_, trained_, frozen_,
  full_, capacity_) where the subcommand compares arms. Reruns reproduce
  results.csv and summary.json byte for byte.

CSV SCHEMAS
  results.csv:
    command,arm,alpha,beta,gamma,variant,transform,seed,student_main,
    student_aux,aligner_main,aligner_aux,final_train_task_loss,max_ortho_dev,
    student_params,aligner_params
    (aligner columns are empty for baseline runs)
  epochs.csv:
    epoch,L_t,L_s,task,soft,manifold,aux_t,aux_s,eval_main,eval_aux
    (L_t/aux_t empty without an aligner; eval columns empty on epochs
    without evaluation)
  gradcheck results.csv:   name,instances,max_rel_error,pass
  prop1-audit results.csv: pairs,violations,worst_triangle_slack,worst_bound_slack
  gen-teacher results.csv: split,path,rows,dim

EXIT CODES
  0 success; 1 config error; 2 runtime/numeric error; 3 property violation
  (gradcheck, prop1-audit).";

#[derive(Parser)]
#[command(
    name = "armada",
    version,
    about = "Cross-modal distillation experiments: train a student against a frozen \
             teacher through a trainable aligner, sweep the ablation grid, and audit \
             the loss properties.",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config file (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output root (else $ARMADA_OUT, else ./armada-runs).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Parallel runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Seed override: re-seeds `train`, replaces sweep.seeds with this one
    /// seed, seeds the audits, and seeds gen-teacher's draw.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// One training run; saves a model checkpoint alongside the results.
    Train,
    /// Loss-weight grid (alpha x beta x gamma x variant) across seeds.
    Sweep,
    /// Teacher-noise grid with per-seed sensitivity scores.
    NoiseSweep,
    /// Aligned vs shuffled teacher pairing, per manifold variant.
    ShuffleAblation,
    /// Trained vs initialization-frozen aligner.
    FrozenAligner,
    /// Full model vs capacity-matched aligner without projection/aux heads.
    CapacityAblation,
    /// Finite-difference audit of every loss gradient (exit 3 on failure).
    Gradcheck,
    /// Write the synthetic teacher's representation files for both splits.
    GenTeacher,
    /// Manifold-loss ordering audit over random batch pairs (exit 3 on failure).
    Prop1Audit,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::parse(&text, &p.display().to_string())
                .map_err(|e| CliError::Config(e.0))
        }
        None => {
            ExperimentConfig::parse("", "<defaults>").map_err(|e| CliError::Config(e.0))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.config)?;
    let common = Common {
        out: cli.out,
        jobs: cli.jobs,
        seed: cli.seed,
    };
    match cli.command {
        Command::Train => commands::train(&cfg, &common),
        Command::Sweep => commands::sweep(&cfg, &common),
        Command::NoiseSweep => commands::noise_sweep(&cfg, &common),
        Command::ShuffleAblation => commands::shuffle_ablation(&cfg, &common),
        Command::FrozenAligner => commands::frozen_aligner(&cfg, &common),
        Command::CapacityAblation => commands::capacity_ablation(&cfg, &common),
        Command::Gradcheck => commands::gradcheck(&cfg, &common),
        Command::GenTeacher => commands::gen_teacher(&cfg, &common),
        Command::Prop1Audit => commands::prop1_audit(&cfg, &common),
    }
}

fn main() -> ExitCode {
    // Flag mistakes are configuration errors (exit 1); --help and --version
    // are successes, not errors.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.label(), e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
