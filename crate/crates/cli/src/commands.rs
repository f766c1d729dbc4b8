//! The subcommands: single runs, ablation sweeps, verification audits, and
//! representation-file generation.
//!
//! Every sweep-style command follows the same shape: build a deterministic
//! list of planned runs, execute them (in parallel up to `--jobs`), write
//! one directory per run, then aggregate into `results.csv` and
//! `summary.json` and print one line per run in plan order.

use std::path::{Path, PathBuf};

use armada_core::analysis::sensitivity_score;
use armada_core::data::generate_task;
use armada_core::experiments::{
    self, gradient_audit, run_baseline, teacher_tables, RepTransform, RunSpec,
};
use armada_core::models::save_models;
use armada_core::teacher::{
    inject_noise, load_representations, save_representations, shuffle_assignments,
    RepresentationTable,
};
use armada_core::{rng, train_joint, ManifoldVariant, TrainData, TrainOutcome};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Reseed};
use crate::output::{
    command_dir, mean, stats_json, welch_json, write_json, write_results, write_run, RunRow,
};
use crate::CliError;

/// Flags shared by every subcommand.
pub struct Common {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

/// Where the teacher representations come from: synthesized per run, or
/// loaded once from the configured file pair.
enum TeacherSource {
    Synthetic,
    Files {
        train: RepresentationTable,
        test: RepresentationTable,
    },
}

impl TeacherSource {
    /// Loads and validates the file pair if the config names one.
    fn from_config(cfg: &ExperimentConfig) -> Result<TeacherSource, CliError> {
        let (Some(train_path), Some(test_path)) = (&cfg.train_reps, &cfg.test_reps) else {
            return Ok(TeacherSource::Synthetic);
        };
        let load = |path: &Path, expect: usize, split: &str| -> Result<RepresentationTable, CliError> {
            let table = load_representations(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if table.count() != expect {
                return Err(CliError::Config(format!(
                    "{}: {} rows but task.n_{split} = {expect}",
                    path.display(),
                    table.count()
                )));
            }
            Ok(table)
        };
        let train = load(train_path, cfg.spec.task.n_train, "train")?;
        let test = load(test_path, cfg.spec.task.n_test, "test")?;
        if train.dim() != test.dim() {
            return Err(CliError::Config(format!(
                "representation widths differ: {} vs {}",
                train.dim(),
                test.dim()
            )));
        }
        Ok(TeacherSource::Files { train, test })
    }

    /// One distilled run, mirroring the synthetic preparation exactly when
    /// the tables come from files (same transform stream derivation).
    fn run_distilled(&self, spec: &RunSpec) -> armada_core::Result<TrainOutcome> {
        match self {
            TeacherSource::Synthetic => experiments::run_distilled(spec),
            TeacherSource::Files { train, test } => {
                let task = generate_task(&spec.task)?;
                let mut train_reps = train.clone();
                let mut test_reps = test.clone();
                match spec.transform {
                    RepTransform::Clean => {}
                    RepTransform::Noise(sigma) => {
                        train_reps =
                            inject_noise(&train_reps, sigma, rng::mix(spec.transform_seed, 1))?;
                        test_reps =
                            inject_noise(&test_reps, sigma, rng::mix(spec.transform_seed, 2))?;
                    }
                    RepTransform::Shuffle => {
                        train_reps =
                            shuffle_assignments(&train_reps, rng::mix(spec.transform_seed, 1))?;
                    }
                }
                train_joint(&TrainData::with_reps(task, train_reps, test_reps), &spec.train)
            }
        }
    }
}

/// One planned run.
struct Plan {
    arm: &'static str,
    spec: RunSpec,
    /// User-facing replication seed recorded in the results.
    seed: u64,
    baseline: bool,
    save_checkpoint: bool,
}

impl Plan {
    fn run(arm: &'static str, spec: RunSpec, seed: u64) -> Plan {
        Plan {
            arm,
            spec,
            seed,
            baseline: false,
            save_checkpoint: false,
        }
    }

    fn baseline(mut spec: RunSpec, seed: u64) -> Plan {
        // The baseline never sees the teacher: zero loss weights and a clean
        // transform keep the recorded row and directory name honest.
        spec.train.loss.alpha = 0.0;
        spec.train.loss.beta = 0.0;
        spec.train.loss.gamma = 0.0;
        spec.transform = RepTransform::Clean;
        Plan {
            arm: "baseline",
            spec,
            seed,
            baseline: true,
            save_checkpoint: false,
        }
    }
}

/// Runs every plan, writes per-run artifacts, and returns rows in plan
/// order (parallel execution preserves it).
fn execute(
    cmd_dir: &Path,
    command: &str,
    source: &TeacherSource,
    plans: &[Plan],
    jobs: Option<usize>,
) -> Result<Vec<RunRow>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(CliError::runtime)?;
    let rows = pool.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                let outcome = if plan.baseline {
                    run_baseline(&plan.spec)
                } else {
                    source.run_distilled(&plan.spec)
                }
                .map_err(CliError::runtime)?;
                let row = write_run(cmd_dir, command, plan.arm, &plan.spec, plan.seed, &outcome)?;
                if plan.save_checkpoint {
                    let path = cmd_dir.join(&row.dir).join("model.armp");
                    save_models(&path, outcome.aligner.as_ref(), &outcome.student)
                        .map_err(CliError::runtime)?;
                }
                Ok(row)
            })
            .collect::<Result<Vec<RunRow>, CliError>>()
    })?;
    let metric = plans
        .first()
        .map(|p| p.spec.train.metric.name())
        .unwrap_or("score");
    for row in &rows {
        println!("{}", row.console_line(metric));
    }
    Ok(rows)
}

/// Re-seeds one sweep point according to the configured protocol.
fn reseed(spec: &RunSpec, mode: Reseed, seed: u64) -> RunSpec {
    match mode {
        Reseed::Train => spec.with_train_seed(seed),
        Reseed::Full => spec.with_seed(seed),
    }
}

fn finish(
    cmd_dir: &Path,
    command: &str,
    rows: &[RunRow],
    summary: Value,
) -> Result<(), CliError> {
    write_results(cmd_dir, command, rows)?;
    write_json(&cmd_dir.join("summary.json"), &summary)?;
    println!(
        "{command}: {} runs -> {}",
        rows.len(),
        cmd_dir.join("summary.json").display()
    );
    Ok(())
}

fn main_scores(rows: &[RunRow]) -> Vec<f64> {
    rows.iter().map(|r| r.eval.student_main).collect()
}

// ---------------------------------------------------------------------------
// train

/// One run of the configured recipe, with a saved model checkpoint.
pub fn train(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "train")?;
    let source = TeacherSource::from_config(cfg)?;
    let spec = match common.seed {
        Some(s) => cfg.spec.with_train_seed(s),
        None => cfg.spec.clone(),
    };
    let seed = common.seed.unwrap_or(spec.train.seed);
    let mut plan = Plan::run("run", spec, seed);
    plan.save_checkpoint = true;
    let rows = execute(&cmd_dir, "train", &source, &[plan], common.jobs)?;
    let row = &rows[0];
    let summary = json!({
        "command": "train",
        "runs": 1,
        "final": {
            "student_main": row.eval.student_main,
            "student_aux": row.eval.student_aux,
            "aligner_main": row.eval.aligner_main,
            "aligner_aux": row.eval.aligner_aux,
            "final_train_task_loss": row.final_train_task_loss,
            "max_ortho_dev": row.max_ortho_dev,
        },
        "checkpoint": format!("{}/model.armp", row.dir),
    });
    finish(&cmd_dir, "train", &rows, summary)
}

// ---------------------------------------------------------------------------
// sweep

/// Full loss-weight grid: α × β × γ × variant × seeds, one distilled run
/// each. Groups are aggregated across seeds; when the grid contains the
/// all-zero point, every other group is tested against it.
pub fn sweep(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "sweep")?;
    let source = TeacherSource::from_config(cfg)?;
    let grids = &cfg.sweep;
    let seeds = seeds_for(cfg, common);

    let mut plans = Vec::new();
    let mut points = Vec::new();
    for &alpha in &grids.alpha {
        for &beta in &grids.beta {
            for &gamma in &grids.gamma {
                for &variant in &grids.variants {
                    points.push((alpha, beta, gamma, variant));
                    for &seed in &seeds {
                        let mut spec = reseed(&cfg.spec, grids.reseed, seed);
                        spec.train.loss.alpha = alpha;
                        spec.train.loss.beta = beta;
                        spec.train.loss.gamma = gamma;
                        spec.train.loss.variant = variant;
                        plans.push(Plan::run("run", spec, seed));
                    }
                }
            }
        }
    }

    let rows = execute(&cmd_dir, "sweep", &source, &plans, common.jobs)?;

    type Point = (f64, f64, f64, ManifoldVariant);
    let per_point: Vec<(&Point, Vec<f64>)> = points
        .iter()
        .zip(rows.chunks(seeds.len()))
        .map(|(point, chunk)| (point, main_scores(chunk)))
        .collect();
    let reference = per_point
        .iter()
        .position(|((a, b, g, _), _)| *a == 0.0 && *b == 0.0 && *g == 0.0);
    let groups: Vec<Value> = per_point
        .iter()
        .map(|((a, b, g, v), scores)| {
            json!({
                "alpha": a, "beta": b, "gamma": g, "variant": v.name(),
                "student_main": stats_json(scores),
            })
        })
        .collect();
    let tests: Vec<Value> = match reference {
        Some(r) if seeds.len() >= 2 => per_point
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != r)
            .map(|(_, ((a, b, g, v), scores))| {
                welch_json(
                    &format!("a{a}_b{b}_g{g}_{} > zero-point", v.name()),
                    scores,
                    &per_point[r].1,
                )
            })
            .collect(),
        _ => Vec::new(),
    };

    let summary = json!({
        "command": "sweep",
        "runs": rows.len(),
        "seeds": seeds,
        "groups": groups,
        "tests": tests,
    });
    finish(&cmd_dir, "sweep", &rows, summary)
}

// ---------------------------------------------------------------------------
// noise-sweep

/// Teacher-noise grid: one distilled run per (seed, σ) plus a per-seed
/// sensitivity score (performance variance over σ variance) for the student
/// and the aligner.
pub fn noise_sweep(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "noise-sweep")?;
    let source = TeacherSource::from_config(cfg)?;
    let sigmas = &cfg.sweep.sigmas;
    if sigmas.iter().all(|s| *s == sigmas[0]) {
        return Err(CliError::Config(
            "sweep.sigmas: the sensitivity score needs at least two distinct noise levels".into(),
        ));
    }
    let seeds = seeds_for(cfg, common);

    let mut plans = Vec::new();
    for &seed in &seeds {
        for &sigma in sigmas {
            let mut spec = reseed(&cfg.spec, cfg.sweep.reseed, seed);
            spec.transform = RepTransform::Noise(sigma);
            plans.push(Plan::run("run", spec, seed));
        }
    }
    let rows = execute(&cmd_dir, "noise-sweep", &source, &plans, common.jobs)?;

    // Rows are seed-major: chunk i holds one seed's full σ grid.
    let by_seed: Vec<&[RunRow]> = rows.chunks(sigmas.len()).collect();
    let by_sigma: Vec<Value> = sigmas
        .iter()
        .enumerate()
        .map(|(j, sigma)| {
            let scores: Vec<f64> = by_seed.iter().map(|chunk| chunk[j].eval.student_main).collect();
            json!({ "sigma": sigma, "student_main": stats_json(&scores) })
        })
        .collect();

    let sensitivities = |pick: fn(&RunRow) -> Option<f64>| -> Result<Value, CliError> {
        let mut per_seed = Vec::new();
        let mut scores = Vec::new();
        for (chunk, &seed) in by_seed.iter().zip(&seeds) {
            let perf: Option<Vec<f64>> = chunk.iter().map(pick).collect();
            let Some(perf) = perf else {
                return Ok(json!(null));
            };
            let score = sensitivity_score(&perf, sigmas).map_err(CliError::runtime)?;
            per_seed.push(json!({ "seed": seed, "score": score }));
            scores.push(score);
        }
        Ok(json!({ "per_seed": per_seed, "mean": mean(&scores) }))
    };
    let student = sensitivities(|r| Some(r.eval.student_main))?;
    let aligner = sensitivities(|r| r.eval.aligner_main)?;

    let summary = json!({
        "command": "noise-sweep",
        "runs": rows.len(),
        "seeds": seeds,
        "sigmas": sigmas,
        "by_sigma": by_sigma,
        "sensitivity": { "student": student, "aligner": aligner },
    });
    finish(&cmd_dir, "noise-sweep", &rows, summary)
}

// ---------------------------------------------------------------------------
// shuffle-ablation

/// Aligned vs shuffled teacher pairing, per manifold variant, against a
/// shared per-seed baseline. Gains are distilled minus baseline on the
/// held-out main-head score.
pub fn shuffle_ablation(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "shuffle-ablation")?;
    let source = TeacherSource::from_config(cfg)?;
    let variants = &cfg.sweep.variants;
    let seeds = seeds_for(cfg, common);

    let mut plans = Vec::new();
    for &seed in &seeds {
        let spec = reseed(&cfg.spec, cfg.sweep.reseed, seed);
        plans.push(Plan::baseline(spec.clone(), seed));
        for &variant in variants {
            let mut aligned = spec.clone();
            aligned.train.loss.variant = variant;
            aligned.transform = RepTransform::Clean;
            plans.push(Plan::run("aligned", aligned.clone(), seed));
            let mut shuffled = aligned;
            shuffled.transform = RepTransform::Shuffle;
            plans.push(Plan::run("shuffled", shuffled, seed));
        }
    }
    let rows = execute(&cmd_dir, "shuffle-ablation", &source, &plans, common.jobs)?;

    // Rows per seed: baseline, then (aligned, shuffled) per variant.
    let chunk_len = 1 + 2 * variants.len();
    let mut groups = Vec::new();
    let mut tests = Vec::new();
    for (v, variant) in variants.iter().enumerate() {
        let mut aligned_gains = Vec::new();
        let mut shuffled_gains = Vec::new();
        for chunk in rows.chunks(chunk_len) {
            let base = chunk[0].eval.student_main;
            aligned_gains.push(chunk[1 + 2 * v].eval.student_main - base);
            shuffled_gains.push(chunk[2 + 2 * v].eval.student_main - base);
        }
        groups.push(json!({
            "variant": variant.name(),
            "aligned_gain": stats_json(&aligned_gains),
            "shuffled_gain": stats_json(&shuffled_gains),
            "ordering_holds": mean(&aligned_gains) > mean(&shuffled_gains),
        }));
        if seeds.len() >= 2 {
            tests.push(welch_json(
                &format!("{} aligned gain > shuffled gain", variant.name()),
                &aligned_gains,
                &shuffled_gains,
            ));
        }
    }

    let summary = json!({
        "command": "shuffle-ablation",
        "runs": rows.len(),
        "seeds": seeds,
        "groups": groups,
        "tests": tests,
    });
    finish(&cmd_dir, "shuffle-ablation", &rows, summary)
}

// ---------------------------------------------------------------------------
// frozen-aligner

/// Trained aligner vs an aligner frozen at initialization. Reports the
/// held-out comparison and the Welch t on final student task loss (frozen
/// minus trained), which is positive when training the aligner helps.
pub fn frozen_aligner(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "frozen-aligner")?;
    let source = TeacherSource::from_config(cfg)?;
    let seeds = seeds_for(cfg, common);

    let mut plans = Vec::new();
    for &seed in &seeds {
        let spec = reseed(&cfg.spec, cfg.sweep.reseed, seed);
        let mut trained = spec.clone();
        trained.train.frozen_aligner = false;
        plans.push(Plan::run("trained", trained, seed));
        let mut frozen = spec;
        frozen.train.frozen_aligner = true;
        plans.push(Plan::run("frozen", frozen, seed));
    }
    let rows = execute(&cmd_dir, "frozen-aligner", &source, &plans, common.jobs)?;

    let trained: Vec<&RunRow> = rows.iter().step_by(2).collect();
    let frozen: Vec<&RunRow> = rows.iter().skip(1).step_by(2).collect();
    let acc = |rs: &[&RunRow]| rs.iter().map(|r| r.eval.student_main).collect::<Vec<_>>();
    let loss = |rs: &[&RunRow]| rs.iter().map(|r| r.final_train_task_loss).collect::<Vec<_>>();
    let (trained_acc, frozen_acc) = (acc(&trained), acc(&frozen));
    let (trained_loss, frozen_loss) = (loss(&trained), loss(&frozen));

    let mut tests = Vec::new();
    if seeds.len() >= 2 {
        tests.push(welch_json("student_main trained > frozen", &trained_acc, &frozen_acc));
        tests.push(welch_json(
            "final_train_task_loss frozen > trained",
            &frozen_loss,
            &trained_loss,
        ));
    }
    let summary = json!({
        "command": "frozen-aligner",
        "runs": rows.len(),
        "seeds": seeds,
        "groups": [
            { "arm": "trained", "student_main": stats_json(&trained_acc),
              "final_train_task_loss": stats_json(&trained_loss) },
            { "arm": "frozen", "student_main": stats_json(&frozen_acc),
              "final_train_task_loss": stats_json(&frozen_loss) },
        ],
        "tests": tests,
    });
    finish(&cmd_dir, "frozen-aligner", &rows, summary)
}

// ---------------------------------------------------------------------------
// capacity-ablation

/// Full configuration vs a capacity-matched aligner without projection or
/// auxiliary heads (extra hidden layers make up the parameter count).
pub fn capacity_ablation(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "capacity-ablation")?;
    let source = TeacherSource::from_config(cfg)?;
    let seeds = seeds_for(cfg, common);

    let mut plans = Vec::new();
    for &seed in &seeds {
        let spec = reseed(&cfg.spec, cfg.sweep.reseed, seed);
        plans.push(Plan::run("full", spec.clone(), seed));
        let mut ablated = spec;
        ablated.train.capacity_ablation = true;
        plans.push(Plan::run("capacity", ablated, seed));
    }
    let rows = execute(&cmd_dir, "capacity-ablation", &source, &plans, common.jobs)?;

    let full: Vec<&RunRow> = rows.iter().step_by(2).collect();
    let ablated: Vec<&RunRow> = rows.iter().skip(1).step_by(2).collect();
    let acc = |rs: &[&RunRow]| rs.iter().map(|r| r.eval.student_main).collect::<Vec<_>>();
    let (full_acc, ablated_acc) = (acc(&full), acc(&ablated));
    let params = |r: &RunRow| {
        json!({
            "student": r.student_params,
            "aligner": r.aligner_params,
        })
    };

    let mut tests = Vec::new();
    if seeds.len() >= 2 {
        tests.push(welch_json("student_main full > capacity", &full_acc, &ablated_acc));
    }
    let summary = json!({
        "command": "capacity-ablation",
        "runs": rows.len(),
        "seeds": seeds,
        "groups": [
            { "arm": "full", "student_main": stats_json(&full_acc), "params": params(full[0]) },
            { "arm": "capacity", "student_main": stats_json(&ablated_acc),
              "params": params(ablated[0]) },
        ],
        "tests": tests,
    });
    finish(&cmd_dir, "capacity-ablation", &rows, summary)
}

// ---------------------------------------------------------------------------
// gradcheck

/// Central finite-difference audit of every loss composition. A failed case
/// is an acceptance-property violation (exit code 3).
pub fn gradcheck(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "gradcheck")?;
    let audit = &cfg.audit;
    let seed = common.seed.unwrap_or(audit.seed);
    let cases = gradient_audit(seed, audit.instances, audit.tol).map_err(CliError::runtime)?;

    let mut csv = String::from("name,instances,max_rel_error,pass\n");
    for case in &cases {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            case.name, case.instances, case.max_rel_error, case.pass
        ));
        println!(
            "[{}] max_rel_error={:.3e} {}",
            case.name,
            case.max_rel_error,
            if case.pass { "pass" } else { "FAIL" }
        );
    }
    let path = cmd_dir.join("results.csv");
    std::fs::write(&path, csv).map_err(CliError::io(&path))?;

    let failures: Vec<&str> = cases
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    let worst = cases
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("audit always yields cases");
    let summary = json!({
        "command": "gradcheck",
        "seed": seed,
        "instances": audit.instances,
        "tol": audit.tol,
        "cases": cases,
        "failures": failures,
        "worst": { "name": worst.name, "max_rel_error": worst.max_rel_error },
    });
    write_json(&cmd_dir.join("summary.json"), &summary)?;
    println!(
        "gradcheck: {} cases, {} failures -> {}",
        cases.len(),
        failures.len(),
        cmd_dir.join("summary.json").display()
    );
    if !failures.is_empty() {
        return Err(CliError::Violation(format!(
            "gradient audit failed for {} of {} cases (worst {} at {:.3e}, tol {:.1e})",
            failures.len(),
            cases.len(),
            worst.name,
            worst.max_rel_error,
            audit.tol
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// prop1-audit

/// Manifold-loss ordering audit over random batch pairs. Any violation is
/// an acceptance-property violation (exit code 3).
pub fn prop1_audit(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "prop1-audit")?;
    let seed = common.seed.unwrap_or(cfg.audit.seed);
    let audit = experiments::prop1_audit(seed, cfg.audit.pairs).map_err(CliError::runtime)?;

    let csv = format!(
        "pairs,violations,worst_triangle_slack,worst_bound_slack\n{},{},{},{}\n",
        audit.pairs, audit.violations, audit.worst_triangle_slack, audit.worst_bound_slack
    );
    let path = cmd_dir.join("results.csv");
    std::fs::write(&path, csv).map_err(CliError::io(&path))?;

    let pass = audit.violations == 0;
    let mut summary = serde_json::to_value(&audit).map_err(CliError::runtime)?;
    summary["command"] = json!("prop1-audit");
    summary["seed"] = json!(seed);
    summary["pass"] = json!(pass);
    write_json(&cmd_dir.join("summary.json"), &summary)?;
    println!(
        "prop1-audit: pairs={} violations={} worst_triangle_slack={:.3e} worst_bound_slack={:.3e}",
        audit.pairs, audit.violations, audit.worst_triangle_slack, audit.worst_bound_slack
    );
    if !pass {
        return Err(CliError::Violation(format!(
            "{} of {} batch pairs violated the manifold-loss orderings",
            audit.violations, audit.pairs
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-teacher

/// Writes the synthetic teacher's representation tables for both splits so
/// later runs can load them via `teacher.train_reps` / `teacher.test_reps`.
pub fn gen_teacher(cfg: &ExperimentConfig, common: &Common) -> Result<(), CliError> {
    let cmd_dir = command_dir(&common.out, "gen-teacher")?;
    let mut spec = cfg.spec.clone();
    if let Some(seed) = common.seed {
        spec.teacher.seed = seed;
    }
    let task = generate_task(&spec.task).map_err(CliError::runtime)?;
    let (train_reps, test_reps) =
        teacher_tables(&task, &spec.teacher).map_err(CliError::runtime)?;

    let mut files = Vec::new();
    let mut csv = String::from("split,path,rows,dim\n");
    for (split, table) in [("train", &train_reps), ("test", &test_reps)] {
        let path = cmd_dir.join(format!("teacher_{split}.armd"));
        save_representations(&path, table).map_err(CliError::runtime)?;
        println!(
            "[gen-teacher] wrote {} ({} x {})",
            path.display(),
            table.count(),
            table.dim()
        );
        csv.push_str(&format!(
            "{split},{},{},{}\n",
            path.display(),
            table.count(),
            table.dim()
        ));
        files.push(json!({
            "split": split,
            "path": path.display().to_string(),
            "rows": table.count(),
            "dim": table.dim(),
            "provenance": table.provenance.to_string(),
        }));
    }
    let path = cmd_dir.join("results.csv");
    std::fs::write(&path, csv).map_err(CliError::io(&path))?;
    write_json(
        &cmd_dir.join("summary.json"),
        &json!({ "command": "gen-teacher", "files": files }),
    )?;
    Ok(())
}

/// The replication seeds a sweep-style command runs over; `--seed` narrows
/// the grid to that single seed.
fn seeds_for(cfg: &ExperimentConfig, common: &Common) -> Vec<u64> {
    match common.seed {
        Some(s) => vec![s],
        None => cfg.sweep.seeds.clone(),
    }
}
