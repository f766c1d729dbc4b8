//! Prepared experiment runs: synthetic task, teacher table, optional
//! representation corruption, then training. The CLI and the acceptance
//! suite both drive experiments through this layer so every run derives its
//! randomness the same way.

use crate::data::{generate_task, Dataset, Inputs, Labels, SyntheticTask, TaskConfig, TaskKind};
use crate::error::{Error, Result};
use crate::losses::{
    aligner_total_loss, logit_match_loss, manifold_loss, student_total_loss, task_loss,
    verify_prop1, LossConfig, ManifoldVariant,
};
use crate::models::{
    aligner_forward, gaussian_matrix, student_forward, AlignerConfig, AlignerParams, BoundParams,
    DetachedOutputs, StudentConfig, StudentInput, StudentParams,
};
use crate::rng;
use crate::teacher::{
    inject_noise, shuffle_assignments, synth_teacher, RepresentationTable, TeacherConfig,
};
use crate::tensor::{backward, grad_check, Gradients, Graph, Matrix};
use crate::train::{train_joint, train_undistilled, TrainConfig, TrainData, TrainOutcome};
use rand::Rng;

/// Corruption applied to the teacher tables before training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RepTransform {
    Clean,
    /// Additive Gaussian noise on both splits (independent draws).
    Noise(f64),
    /// Shuffle the training pairing between examples and representations;
    /// the test pairing stays aligned so aligner evaluation remains
    /// interpretable.
    Shuffle,
}

impl RepTransform {
    pub fn label(&self) -> String {
        match self {
            RepTransform::Clean => "clean".into(),
            RepTransform::Noise(sigma) => format!("noise{sigma}"),
            RepTransform::Shuffle => "shuffle".into(),
        }
    }
}

/// Complete recipe for one run.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub task: TaskConfig,
    pub teacher: TeacherConfig,
    pub train: TrainConfig,
    pub transform: RepTransform,
    /// Seed for the transform's own randomness.
    pub transform_seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            teacher: TeacherConfig::default(),
            train: TrainConfig::default(),
            transform: RepTransform::Clean,
            transform_seed: 97,
        }
    }
}

impl RunSpec {
    /// The same recipe re-seeded: every random stream (task draw, teacher
    /// draw, initialization/shuffling, transform) gets an independent seed
    /// derived from `seed`.
    pub fn with_seed(&self, seed: u64) -> RunSpec {
        let mut spec = self.clone();
        spec.task.seed = rng::mix(seed, 0xA1);
        spec.teacher.seed = rng::mix(seed, 0xA2);
        spec.train.seed = rng::mix(seed, 0xA3);
        spec.transform_seed = rng::mix(seed, 0xA4);
        spec
    }

    /// The same recipe with only the training-side randomness re-seeded:
    /// the dataset and teacher stay fixed while initialization, batch
    /// shuffling, and the transform draw change. This is the protocol for
    /// seed-replicated comparisons on a single dataset, where run-to-run
    /// variance should reflect training randomness rather than data
    /// resampling.
    pub fn with_train_seed(&self, seed: u64) -> RunSpec {
        let mut spec = self.clone();
        spec.train.seed = rng::mix(seed, 0xB3);
        spec.transform_seed = rng::mix(seed, 0xB4);
        spec
    }
}

/// Generates teacher tables for both splits from one draw, so the anchors
/// and input map are shared while every example gets independent jitter.
pub fn teacher_tables(
    task: &SyntheticTask,
    cfg: &TeacherConfig,
) -> Result<(RepresentationTable, RepresentationTable)> {
    let combined = concat_datasets(&task.train, &task.test)?;
    let table = synth_teacher(&combined, cfg)?;
    let n_train = task.train.len();
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..combined.len()).collect();
    Ok((table.gather(&train_idx)?, table.gather(&test_idx)?))
}

fn concat_datasets(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let inputs = match (&a.inputs, &b.inputs) {
        (Inputs::Vectors(x), Inputs::Vectors(y)) => {
            if x.cols() != y.cols() {
                return Err(Error::Contract(format!(
                    "cannot concatenate feature widths {} and {}",
                    x.cols(),
                    y.cols()
                )));
            }
            let rows: Vec<Vec<f64>> = (0..x.rows())
                .map(|i| x.row(i).to_vec())
                .chain((0..y.rows()).map(|i| y.row(i).to_vec()))
                .collect();
            Inputs::Vectors(Matrix::from_rows(&rows)?)
        }
        (Inputs::Tokens(x), Inputs::Tokens(y)) => {
            if a.vocab != b.vocab {
                return Err(Error::Contract(format!(
                    "cannot concatenate vocabularies {} and {}",
                    a.vocab, b.vocab
                )));
            }
            Inputs::Tokens(x.iter().chain(y).cloned().collect())
        }
        _ => return Err(Error::Contract("cannot concatenate mixed input modes".into())),
    };
    let labels = match (&a.labels, &b.labels) {
        (Labels::Classes(x), Labels::Classes(y)) => {
            Labels::Classes(x.iter().chain(y).copied().collect())
        }
        (Labels::Values(x), Labels::Values(y)) => {
            Labels::Values(x.iter().chain(y).copied().collect())
        }
        _ => return Err(Error::Contract("cannot concatenate mixed label kinds".into())),
    };
    Ok(Dataset {
        inputs,
        labels,
        vocab: a.vocab,
    })
}

/// Task + teacher + transform, ready to train on.
pub fn prepare(spec: &RunSpec) -> Result<TrainData> {
    let task = generate_task(&spec.task)?;
    let (mut train_reps, mut test_reps) = teacher_tables(&task, &spec.teacher)?;
    match spec.transform {
        RepTransform::Clean => {}
        RepTransform::Noise(sigma) => {
            train_reps = inject_noise(&train_reps, sigma, rng::mix(spec.transform_seed, 1))?;
            test_reps = inject_noise(&test_reps, sigma, rng::mix(spec.transform_seed, 2))?;
        }
        RepTransform::Shuffle => {
            train_reps = shuffle_assignments(&train_reps, rng::mix(spec.transform_seed, 1))?;
        }
    }
    Ok(TrainData::with_reps(task, train_reps, test_reps))
}

/// One distilled run.
pub fn run_distilled(spec: &RunSpec) -> Result<TrainOutcome> {
    train_joint(&prepare(spec)?, &spec.train)
}

/// The matching baseline: same task and the same student streams, no
/// teacher involved at all.
pub fn run_baseline(spec: &RunSpec) -> Result<TrainOutcome> {
    let task = generate_task(&spec.task)?;
    train_undistilled(&TrainData::new(task), &spec.train)
}

/// Paired distilled-vs-baseline result on one seed.
#[derive(Debug)]
pub struct GainResult {
    pub distilled: TrainOutcome,
    pub baseline: TrainOutcome,
}

impl GainResult {
    /// Held-out main-head score difference, distilled minus baseline.
    pub fn gain(&self) -> f64 {
        self.distilled.report.final_eval.student_main - self.baseline.report.final_eval.student_main
    }
}

/// Runs the distilled model and its baseline on the same spec.
pub fn run_gain(spec: &RunSpec) -> Result<GainResult> {
    Ok(GainResult {
        distilled: run_distilled(spec)?,
        baseline: run_baseline(spec)?,
    })
}

// ---------------------------------------------------------------------------
// Verification experiments: finite-difference audit of every loss gradient,
// and the manifold-loss ordering audit over random batch pairs.

/// One audited loss composition.
#[derive(Clone, Debug, serde::Serialize)]
pub struct AuditCase {
    pub name: String,
    pub instances: usize,
    /// Largest relative error between analytic and central-difference
    /// gradients over all instances and parameters.
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Outcome of checking the manifold-loss orderings on random batch pairs.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Prop1Audit {
    pub pairs: usize,
    pub violations: usize,
    /// Smallest observed `l_elementwise - l_euclid` (must stay ≥ -1e-9).
    pub worst_triangle_slack: f64,
    /// Smallest observed `l_euclid² - bound_rhs` (must stay ≥ -1e-9).
    pub worst_bound_slack: f64,
}

fn flat_params(tensors: &[(String, &Matrix)]) -> Vec<f64> {
    tensors
        .iter()
        .flat_map(|(_, m)| m.data().iter().copied())
        .collect()
}

fn load_flat(
    theta: &[f64],
    total: usize,
    mut for_each: impl FnMut(&mut dyn FnMut(&str, &mut Matrix) -> Result<()>) -> Result<()>,
) -> Result<()> {
    if theta.len() != total {
        return Err(Error::Contract(format!(
            "flat vector holds {} values for {} parameters",
            theta.len(),
            total
        )));
    }
    let mut cursor = 0;
    for_each(&mut |_, m: &mut Matrix| {
        let len = m.data().len();
        m.data_mut().copy_from_slice(&theta[cursor..cursor + len]);
        cursor += len;
        Ok(())
    })
}

fn grads_in_order(bound: &BoundParams, grads: &Gradients) -> Vec<f64> {
    bound
        .named()
        .iter()
        .flat_map(|(_, node)| {
            grads
                .get(node)
                .expect("backward fills every leaf")
                .data()
                .to_vec()
        })
        .collect()
}

struct CaseRunner {
    seed: u64,
    instances: usize,
    tol: f64,
    cases: Vec<AuditCase>,
}

impl CaseRunner {
    /// Runs `loss_fn(instance, theta)` over fresh random instances, checking
    /// the analytic gradient against central differences each time.
    fn run<F>(&mut self, name: &str, theta_for: impl Fn(u64) -> Result<Vec<f64>>, loss_fn: F) -> Result<()>
    where
        F: Fn(u64, &[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut worst = 0.0f64;
        for i in 0..self.instances {
            let instance = rng::mix(self.seed, i as u64);
            let theta = theta_for(instance)?;
            let report = grad_check(
                |t| loss_fn(instance, t),
                &theta,
                1e-5,
                self.tol,
            )?;
            worst = worst.max(report.max_rel_error);
        }
        self.cases.push(AuditCase {
            name: name.into(),
            instances: self.instances,
            max_rel_error: worst,
            pass: worst < self.tol,
        });
        Ok(())
    }
}

fn random_matrix(rows: usize, cols: usize, std: f64, seed: u64, tag: &str) -> Result<Matrix> {
    let mut rng = rng::stream(seed, tag);
    gaussian_matrix(rows, cols, std, &mut rng)
}

fn random_classes(n: usize, classes: usize, seed: u64) -> Labels {
    let mut rng = rng::stream(seed, "audit.labels");
    Labels::Classes((0..n).map(|_| rng.random_range(0..classes)).collect())
}

/// Central-difference audit of every loss composition: the two task losses,
/// both output-matching forms, all three manifold variants (plus the raw
/// cosine), the aligner total at each auxiliary weight, and the student total
/// over the full (α, β, γ) ∈ {0, 0.5, 1}³ grid.
///
/// Each case draws `instances` fresh random instances and compares analytic
/// gradients against central differences at relative tolerance `tol`.
pub fn gradient_audit(seed: u64, instances: usize, tol: f64) -> Result<Vec<AuditCase>> {
    if instances == 0 {
        return Err(Error::Parameter("gradient audit needs at least one instance".into()));
    }
    let mut runner = CaseRunner {
        seed,
        instances,
        tol,
        cases: Vec::new(),
    };

    // Batch sizes vary per instance; dims stay small so finite differences
    // stay cheap.
    let batch = |instance: u64| 1 + (rng::mix(instance, 7) % 4) as usize;

    runner.run(
        "task/classification",
        |i| Ok(random_matrix(batch(i), 3, 1.0, i, "audit.logits")?.data().to_vec()),
        |i, theta| {
            let n = batch(i);
            let g = Graph::new();
            let logits = g.leaf(Matrix::new(n, 3, theta.to_vec())?);
            let loss = task_loss(&logits, &random_classes(n, 3, i), TaskKind::Classification)?;
            let grads = backward(&loss)?;
            Ok((loss.item()?, grads.get(&logits).unwrap().data().to_vec()))
        },
    )?;

    runner.run(
        "task/regression",
        |i| Ok(random_matrix(batch(i), 1, 1.0, i, "audit.preds")?.data().to_vec()),
        |i, theta| {
            let n = batch(i);
            let g = Graph::new();
            let preds = g.leaf(Matrix::new(n, 1, theta.to_vec())?);
            let targets = random_matrix(n, 1, 1.0, rng::mix(i, 11), "audit.targets")?;
            let loss = task_loss(
                &preds,
                &Labels::Values(targets.data().to_vec()),
                TaskKind::Regression,
            )?;
            let grads = backward(&loss)?;
            Ok((loss.item()?, grads.get(&preds).unwrap().data().to_vec()))
        },
    )?;

    for (name, kind) in [
        ("output-match/softmax", TaskKind::Classification),
        ("output-match/scaled", TaskKind::Regression),
    ] {
        let cols = if kind == TaskKind::Classification { 3 } else { 1 };
        runner.run(
            name,
            |i| Ok(random_matrix(batch(i), cols, 1.0, i, "audit.student")?.data().to_vec()),
            |i, theta| {
                let n = batch(i);
                let g = Graph::new();
                let student = g.leaf(Matrix::new(n, cols, theta.to_vec())?);
                let teacher = match kind {
                    TaskKind::Classification => {
                        random_matrix(n, cols, 1.0, rng::mix(i, 13), "audit.teacher")?
                    }
                    // The per-row Euclidean output match is not
                    // differentiable where the tempered maps coincide, so
                    // place the teacher a fixed margin away from the base
                    // student draw (theta-independent, hence constant across
                    // the perturbed evaluations) to keep central differences
                    // on one smooth side of the kink.
                    TaskKind::Regression => {
                        let base = random_matrix(n, 1, 1.0, i, "audit.student")?;
                        let gap = random_matrix(n, 1, 1.0, rng::mix(i, 13), "audit.teacher")?;
                        let rows: Vec<Vec<f64>> = (0..n)
                            .map(|r| {
                                let d = gap.get(r, 0);
                                vec![base.get(r, 0) - (d + 0.25 * d.signum())]
                            })
                            .collect();
                        Matrix::from_rows(&rows)?
                    }
                };
                let loss = logit_match_loss(&g, &teacher, &student, 5.0, kind)?;
                let grads = backward(&loss)?;
                Ok((loss.item()?, grads.get(&student).unwrap().data().to_vec()))
            },
        )?;
    }

    let manifold_cases = [
        ("manifold/cosine", ManifoldVariant::Cosine, true),
        ("manifold/cosine-raw", ManifoldVariant::Cosine, false),
        ("manifold/euclid", ManifoldVariant::Euclid, true),
        ("manifold/elementwise", ManifoldVariant::Elementwise, true),
    ];
    for (name, variant, normalize) in manifold_cases {
        runner.run(
            name,
            |i| Ok(random_matrix(batch(i), 3, 1.0, i, "audit.proj_s")?.data().to_vec()),
            move |i, theta| {
                let n = batch(i);
                let g = Graph::new();
                let student = g.leaf(Matrix::new(n, 3, theta.to_vec())?);
                let teacher = random_matrix(n, 3, 1.0, rng::mix(i, 17), "audit.proj_t")?;
                let loss = manifold_loss(&g, &teacher, &student, variant, normalize)?;
                let grads = backward(&loss)?;
                Ok((loss.item()?, grads.get(&student).unwrap().data().to_vec()))
            },
        )?;
    }

    let aligner_cfg = AlignerConfig {
        d_t: 5,
        hidden: 4,
        manifold: 3,
        classes: 2,
        extra_layers: 0,
        with_heads: true,
    };
    for gamma in [0.0, 0.5, 1.0] {
        let cfg = aligner_cfg.clone();
        runner.run(
            &format!("aligner-total/gamma{gamma}"),
            |i| Ok(flat_params(&AlignerParams::init(&cfg, i)?.tensors())),
            |i, theta| {
                let mut params = AlignerParams::init(&aligner_cfg, i)?;
                load_flat(theta, params.param_count(), |f| params.for_each_mut(f))?;
                let n = batch(i);
                let reps = random_matrix(n, 5, 1.0, rng::mix(i, 19), "audit.reps")?;
                let labels = random_classes(n, 2, rng::mix(i, 23));
                let g = Graph::new();
                let bound = params.bind(&g);
                let out = aligner_forward(&g, &bound, &reps)?;
                let mut cfg = LossConfig::default();
                cfg.gamma = gamma;
                let (loss, _) = aligner_total_loss(&out, &labels, &cfg)?;
                let grads = backward(&loss)?;
                Ok((loss.item()?, grads_in_order(&bound, &grads)))
            },
        )?;
    }

    let student_cfg = StudentConfig {
        input: StudentInput::VectorDim(4),
        width: 4,
        manifold: 3,
        classes: 2,
    };
    for alpha in [0.0, 0.5, 1.0] {
        for beta in [0.0, 0.5, 1.0] {
            for gamma in [0.0, 0.5, 1.0] {
                let cfg = student_cfg.clone();
                runner.run(
                    &format!("student-total/a{alpha}_b{beta}_g{gamma}"),
                    |i| Ok(flat_params(&StudentParams::init(&cfg, i)?.tensors())),
                    |i, theta| {
                        let mut params = StudentParams::init(&student_cfg, i)?;
                        load_flat(theta, params.param_count(), |f| params.for_each_mut(f))?;
                        let n = batch(i);
                        let inputs =
                            Inputs::Vectors(random_matrix(n, 4, 1.0, rng::mix(i, 29), "audit.x")?);
                        let labels = random_classes(n, 2, rng::mix(i, 31));
                        let teacher = DetachedOutputs {
                            logits: random_matrix(n, 2, 1.0, rng::mix(i, 37), "audit.t_logit")?,
                            projection: Some(random_matrix(
                                n,
                                3,
                                1.0,
                                rng::mix(i, 41),
                                "audit.t_proj",
                            )?),
                            aux_logits: Some(random_matrix(
                                n,
                                2,
                                1.0,
                                rng::mix(i, 43),
                                "audit.t_aux",
                            )?),
                        };
                        let g = Graph::new();
                        let bound = params.bind(&g);
                        let out = student_forward(&g, &bound, &inputs)?;
                        let mut cfg = LossConfig::default();
                        cfg.alpha = alpha;
                        cfg.beta = beta;
                        cfg.gamma = gamma;
                        let (loss, _) = student_total_loss(&g, &out, &teacher, &labels, &cfg)?;
                        let grads = backward(&loss)?;
                        Ok((loss.item()?, grads_in_order(&bound, &grads)))
                    },
                )?;
            }
        }
    }

    Ok(runner.cases)
}

/// Checks the manifold-loss orderings (per-example ≥ centroid, and the
/// centroid/cosine bound) on `pairs` seeded random batch pairs with
/// n ∈ [1,16], m ∈ [2,32] and mixed value scales; every 50th pair uses an
/// all-zero second batch to exercise the degenerate-mean path.
pub fn prop1_audit(seed: u64, pairs: usize) -> Result<Prop1Audit> {
    if pairs == 0 {
        return Err(Error::Parameter("ordering audit needs at least one pair".into()));
    }
    let mut rng = rng::stream(seed, "prop1.audit");
    let mut violations = 0;
    let mut worst_triangle = f64::INFINITY;
    let mut worst_bound = f64::INFINITY;
    for i in 0..pairs {
        let n = rng.random_range(1..=16);
        let m = rng.random_range(2..=32);
        let scale = 10f64.powf(rng.random_range(-1.0..=1.0));
        let p_ts = gaussian_matrix(n, m, scale, &mut rng)?;
        let p_s = if i % 50 == 49 {
            Matrix::zeros(n, m)
        } else {
            gaussian_matrix(n, m, scale, &mut rng)?
        };
        let report = verify_prop1(&p_ts, &p_s)?;
        if !(report.holds_triangle && report.holds_amgm) {
            violations += 1;
        }
        worst_triangle = worst_triangle.min(report.l_elementwise - report.l_euclid);
        worst_bound = worst_bound.min(report.l_euclid * report.l_euclid - report.bound_rhs);
    }
    Ok(Prop1Audit {
        pairs,
        violations,
        worst_triangle_slack: worst_triangle,
        worst_bound_slack: worst_bound,
    })
}
