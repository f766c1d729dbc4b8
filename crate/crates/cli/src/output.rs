//! Result files and aggregation helpers.
//!
//! Every subcommand owns one directory under the output root and writes the
//! same artifact kinds into it: `results.csv` with one row per run,
//! `summary.json` with aggregate statistics, and one subdirectory per run
//! holding `report.json` plus the per-epoch `epochs.csv` curve. All values
//! derive deterministically from the configuration, so reruns reproduce
//! `results.csv` and `summary.json` byte for byte; wall-clock timing appears
//! only inside the per-run `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use armada_core::experiments::{RepTransform, RunSpec};
use armada_core::{EvalScores, TrainOutcome};
use serde_json::{json, Value};

use crate::CliError;

/// Header of the per-run finals table.
pub const RESULTS_HEADER: &str = "command,arm,alpha,beta,gamma,variant,transform,seed,\
student_main,student_aux,aligner_main,aligner_aux,final_train_task_loss,max_ortho_dev,\
student_params,aligner_params";

/// One completed run, flattened for `results.csv` and the summary.
#[derive(Clone, Debug)]
pub struct RunRow {
    pub arm: String,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub variant: String,
    pub transform: String,
    /// The user-facing replication seed, not the derived stream seeds.
    pub seed: u64,
    pub eval: EvalScores,
    pub final_train_task_loss: f64,
    pub max_ortho_dev: f64,
    pub student_params: usize,
    pub aligner_params: Option<usize>,
    /// Run-directory name relative to the subcommand directory.
    pub dir: String,
}

impl RunRow {
    pub fn from_outcome(
        arm: &str,
        spec: &RunSpec,
        seed: u64,
        dir: String,
        outcome: &TrainOutcome,
    ) -> RunRow {
        let report = &outcome.report;
        RunRow {
            arm: arm.to_string(),
            alpha: spec.train.loss.alpha,
            beta: spec.train.loss.beta,
            gamma: spec.train.loss.gamma,
            variant: spec.train.loss.variant.name().to_string(),
            transform: spec.transform.label(),
            seed,
            eval: report.final_eval,
            final_train_task_loss: report.final_train_task_loss,
            max_ortho_dev: report.max_ortho_dev,
            student_params: report.student_params,
            aligner_params: report.aligner_params,
            dir,
        }
    }

    pub fn csv_line(&self, command: &str) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let opt_n = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{command},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.arm,
            self.alpha,
            self.beta,
            self.gamma,
            self.variant,
            self.transform,
            self.seed,
            self.eval.student_main,
            self.eval.student_aux,
            opt(self.eval.aligner_main),
            opt(self.eval.aligner_aux),
            self.final_train_task_loss,
            self.max_ortho_dev,
            self.student_params,
            opt_n(self.aligner_params),
        )
    }

    /// The one-line progress report printed for this run.
    pub fn console_line(&self, metric: &str) -> String {
        let aligner = self
            .eval
            .aligner_main
            .map_or(String::new(), |a| format!(" aligner={a:.4}"));
        format!(
            "[{}] {metric}={:.4} aux={:.4}{aligner} task_loss={:.4}",
            self.dir, self.eval.student_main, self.eval.student_aux, self.final_train_task_loss
        )
    }
}

/// Directory name for one run: the loss tuple, the variant, any transform
/// tag, and the seed, prefixed with the arm when the subcommand compares
/// arms (e.g. `shuffled_a0.5_b1_g1_euclid_s3`).
pub fn run_dir_name(arm: &str, spec: &RunSpec, seed: u64) -> String {
    let l = &spec.train.loss;
    let mut parts: Vec<String> = Vec::new();
    if arm != "run" {
        parts.push(arm.to_string());
    }
    parts.push(format!("a{}", l.alpha));
    parts.push(format!("b{}", l.beta));
    parts.push(format!("g{}", l.gamma));
    parts.push(l.variant.name().to_string());
    if spec.transform != RepTransform::Clean {
        parts.push(spec.transform.label());
    }
    parts.push(format!("s{seed}"));
    parts.join("_")
}

/// Writes one run's artifacts (`report.json`, `epochs.csv`) into its
/// directory and returns the flattened row.
pub fn write_run(
    cmd_dir: &Path,
    command: &str,
    arm: &str,
    spec: &RunSpec,
    seed: u64,
    outcome: &TrainOutcome,
) -> Result<RunRow, CliError> {
    let dir = run_dir_name(arm, spec, seed);
    let run_dir = cmd_dir.join(&dir);
    fs::create_dir_all(&run_dir).map_err(CliError::io(&run_dir))?;

    let row = RunRow::from_outcome(arm, spec, seed, dir, outcome);
    let report = json!({
        "command": command,
        "arm": row.arm,
        "alpha": row.alpha,
        "beta": row.beta,
        "gamma": row.gamma,
        "variant": row.variant,
        "transform": row.transform,
        "seed": row.seed,
        "report": outcome.report,
    });
    write_json(&run_dir.join("report.json"), &report)?;
    outcome
        .report
        .write_csv(run_dir.join("epochs.csv"))
        .map_err(CliError::runtime)?;
    Ok(row)
}

/// Writes `results.csv` with the standard header.
pub fn write_results(cmd_dir: &Path, command: &str, rows: &[RunRow]) -> Result<(), CliError> {
    let mut text = String::from(RESULTS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.csv_line(command));
        text.push('\n');
    }
    let path = cmd_dir.join("results.csv");
    fs::write(&path, text).map_err(CliError::io(&path))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

/// Resolves the subcommand's output directory: `--out`, else `$ARMADA_OUT`,
/// else `./armada-runs`, with the subcommand name appended.
pub fn command_dir(out: &Option<PathBuf>, command: &str) -> Result<PathBuf, CliError> {
    let root = match out {
        Some(dir) => dir.clone(),
        None => std::env::var_os("ARMADA_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("armada-runs")),
    };
    let dir = root.join(command);
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// Aggregation.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two samples.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `{n, mean, std, min, max}` for a sample, as a JSON fragment.
pub fn stats_json(xs: &[f64]) -> Value {
    let fold = |init: f64, f: fn(f64, f64) -> f64| xs.iter().copied().fold(init, f);
    json!({
        "n": xs.len(),
        "mean": mean(xs),
        "std": std_dev(xs),
        "min": fold(f64::INFINITY, f64::min),
        "max": fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Welch one-sided test as a JSON fragment; degenerate samples produce an
/// `error` field instead of aborting the summary.
pub fn welch_json(name: &str, a: &[f64], b: &[f64]) -> Value {
    match armada_core::analysis::welch_t_one_sided(a, b) {
        Ok(w) => json!({ "name": name, "t": w.t, "dof": w.dof, "p": w.p }),
        Err(e) => json!({ "name": name, "error": e.to_string() }),
    }
}
