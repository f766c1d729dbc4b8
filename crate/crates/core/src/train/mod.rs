//! The online joint training loop plus its optimizer.
//!
//! Per batch the aligner takes an AdamW step on its own loss first, its
//! projection is re-orthonormalized, and its fresh outputs are detached and
//! fed to the student, which then takes its own step. Frozen-aligner and
//! capacity-ablation modes reuse the same loop with the aligner update
//! skipped or the aligner's heads replaced by extra depth.

mod adamw;

pub use adamw::{AdamW, AdamWConfig};

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::analysis;
use crate::data::{Dataset, Inputs, Labels, SyntheticTask, TaskKind};
use crate::error::{Error, Result};
use crate::losses::{
    aligner_total_loss, student_total_loss, LossConfig,
};
use crate::models::{
    aligner_forward, capacity_extra_layers, student_forward, AlignerConfig, AlignerParams,
    BoundParams, DetachedOutputs, StudentConfig, StudentInput, StudentParams,
};
use crate::rng;
use crate::teacher::RepresentationTable;
use crate::tensor::{backward, Gradients, Graph, Matrix};

/// Held-out scoring rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Mcc,
    Pearson,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Mcc => "mcc",
            Metric::Pearson => "pearson",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "mcc" => Ok(Metric::Mcc),
            "pearson" => Ok(Metric::Pearson),
            other => Err(Error::Parameter(format!(
                "unknown metric '{other}' (expected accuracy, mcc, or pearson)"
            ))),
        }
    }
}

/// Everything one training run consumes.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Dataset,
    pub test: Dataset,
    /// Teacher representations paired with the training examples.
    pub train_reps: Option<RepresentationTable>,
    /// Teacher representations paired with the test examples (aligner
    /// evaluation only; the student never sees them).
    pub test_reps: Option<RepresentationTable>,
}

impl TrainData {
    pub fn new(task: SyntheticTask) -> Self {
        Self {
            train: task.train,
            test: task.test,
            train_reps: None,
            test_reps: None,
        }
    }

    pub fn with_reps(
        task: SyntheticTask,
        train_reps: RepresentationTable,
        test_reps: RepresentationTable,
    ) -> Self {
        Self {
            train: task.train,
            test: task.test,
            train_reps: Some(train_reps),
            test_reps: Some(test_reps),
        }
    }
}

/// One run's hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub loss: LossConfig,
    /// Aligner hidden width.
    pub hidden: usize,
    /// Student hidden width.
    pub width: usize,
    /// Shared manifold dimension.
    pub manifold: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub aligner_lr: f64,
    pub student_lr: f64,
    pub weight_decay: f64,
    /// Evaluate every this many epochs (0 = final epoch only).
    pub eval_every: usize,
    pub seed: u64,
    /// Keep the aligner at its initialization; only the student learns.
    pub frozen_aligner: bool,
    /// Drop the aligner's projection and auxiliary head, adding enough extra
    /// hidden layers to match the removed parameter count; forces the
    /// manifold and auxiliary loss weights to zero.
    pub capacity_ablation: bool,
    pub metric: Metric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            hidden: 32,
            width: 32,
            manifold: 16,
            epochs: 10,
            batch_size: 32,
            aligner_lr: 0.01,
            student_lr: 0.01,
            weight_decay: 0.01,
            eval_every: 1,
            seed: 17,
            frozen_aligner: false,
            capacity_ablation: false,
            metric: Metric::Accuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter(
                "epochs and batch size must be positive".into(),
            ));
        }
        if self.hidden == 0 || self.width == 0 || self.manifold == 0 {
            return Err(Error::Parameter("model widths must be positive".into()));
        }
        for (name, lr) in [("aligner_lr", self.aligner_lr), ("student_lr", self.student_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {lr}"
                )));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Parameter(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    /// The loss weights actually trained with: capacity ablation removes the
    /// heads, so the manifold and auxiliary terms are forced off.
    fn effective_loss(&self) -> LossConfig {
        let mut loss = self.loss.clone();
        if self.capacity_ablation {
            loss.beta = 0.0;
            loss.gamma = 0.0;
        }
        loss
    }
}

/// One epoch of logged quantities. Optional cells stay empty in the CSV:
/// aligner columns for undistilled runs, evaluation columns on epochs
/// without one.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_t: Option<f64>,
    pub l_s: f64,
    pub task: f64,
    pub soft: f64,
    pub manifold: f64,
    pub aux_t: Option<f64>,
    pub aux_s: f64,
    pub eval_main: Option<f64>,
    pub eval_aux: Option<f64>,
}

/// Held-out scores for every head.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EvalScores {
    pub student_main: f64,
    pub student_aux: f64,
    pub aligner_main: Option<f64>,
    pub aligner_aux: Option<f64>,
}

/// Full record of one training run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub final_eval: EvalScores,
    /// Mean student task loss over the final epoch's batches.
    pub final_train_task_loss: f64,
    /// Largest `||P^T P - I||_F` observed after any retraction.
    pub max_ortho_dev: f64,
    /// Extra aligner layers added by capacity ablation.
    pub capacity_layers: Option<usize>,
    pub student_params: usize,
    pub aligner_params: Option<usize>,
    pub metric: Metric,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Writes the per-epoch CSV with the fixed column order.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = String::from(
            "epoch,L_t,L_s,task,soft,manifold,aux_t,aux_s,eval_main,eval_aux\n",
        );
        for e in &self.epochs {
            let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                cell(e.l_t),
                e.l_s,
                e.task,
                e.soft,
                e.manifold,
                cell(e.aux_t),
                e.aux_s,
                cell(e.eval_main),
                cell(e.eval_aux),
            ));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// A finished run: the report plus the trained parameters.
#[derive(Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub student: StudentParams,
    pub aligner: Option<AlignerParams>,
}

fn student_config(data: &TrainData, cfg: &TrainConfig) -> Result<StudentConfig> {
    let input = match &data.train.inputs {
        Inputs::Vectors(m) => StudentInput::VectorDim(m.cols()),
        Inputs::Tokens(_) => StudentInput::TokenVocab(data.train.vocab),
    };
    Ok(StudentConfig {
        input,
        width: cfg.width,
        manifold: cfg.manifold,
        classes: output_width_for(&data.train, cfg.loss.task)?,
    })
}

fn output_width_for(train: &Dataset, kind: TaskKind) -> Result<usize> {
    match (kind, &train.labels) {
        (TaskKind::Classification, Labels::Classes(_)) => Ok(train.output_width()),
        (TaskKind::Regression, Labels::Values(_)) => Ok(1),
        (kind, _) => Err(Error::Contract(format!(
            "label variant does not match task kind {kind:?}"
        ))),
    }
}

/// Joint online training: teacher representations in, trained aligner and
/// student out. Deterministic given the config.
pub fn train_joint(data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let loss_cfg = cfg.effective_loss();

    let train_reps = data.train_reps.as_ref().ok_or_else(|| {
        Error::Contract("joint training needs teacher representations for the training split".into())
    })?;
    if train_reps.count() != data.train.len() {
        return Err(Error::Contract(format!(
            "representation table has {} rows for {} training examples",
            train_reps.count(),
            data.train.len()
        )));
    }
    if let Some(tr) = &data.test_reps {
        if tr.count() != data.test.len() {
            return Err(Error::Contract(format!(
                "representation table has {} rows for {} test examples",
                tr.count(),
                data.test.len()
            )));
        }
    }
    if data.test.is_empty() {
        return Err(Error::Contract("evaluation split is empty".into()));
    }

    let classes = output_width_for(&data.train, loss_cfg.task)?;
    let extra_layers = if cfg.capacity_ablation {
        capacity_extra_layers(cfg.hidden, cfg.manifold, classes)
    } else {
        0
    };
    let aligner_cfg = AlignerConfig {
        d_t: train_reps.dim(),
        hidden: cfg.hidden,
        manifold: cfg.manifold,
        classes,
        extra_layers,
        with_heads: !cfg.capacity_ablation,
    };
    let mut aligner = AlignerParams::init(&aligner_cfg, cfg.seed)?;
    let mut student = StudentParams::init(&student_config(data, cfg)?, cfg.seed)?;

    let mut opt_t = AdamW::new(AdamWConfig::new(cfg.aligner_lr, cfg.weight_decay))?;
    let mut opt_s = AdamW::new(AdamWConfig::new(cfg.student_lr, cfg.weight_decay))?;
    let mut order_rng = rng::stream(cfg.seed, "order");

    let n = data.train.len();
    let mut max_ortho_dev: f64 = 0.0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut final_train_task_loss = 0.0;

    for epoch in 1..=cfg.epochs {
        let order = crate::data::permutation(n, &mut order_rng);
        let mut acc = EpochAccumulator::default();

        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.train.gather(chunk)?;
            let batch_reps = train_reps.rows.gather_rows(chunk)?;
            let weight = chunk.len() as f64;

            // Aligner step on its own loss, then retraction.
            let g_t = Graph::new();
            let bound_t = aligner.bind(&g_t);
            let out_t = aligner_forward(&g_t, &bound_t, &batch_reps)?;
            let (loss_t, parts_t) = aligner_total_loss(&out_t, &batch.labels, &loss_cfg)?;
            acc.l_t += weight * loss_t.item()?;
            acc.aux_t += weight * parts_t.aux_task;

            let teacher_out: DetachedOutputs;
            if cfg.frozen_aligner {
                // No update: the pre-step forward is already current.
                teacher_out = out_t.detach();
            } else {
                let grads = backward(&loss_t)?;
                apply_gradients(&mut opt_t, &bound_t, &grads, |f| aligner.for_each_mut(f))?;
                max_ortho_dev = max_ortho_dev.max(aligner.retract()?);
                // Re-forward with the fresh parameters so the student distils
                // from the updated aligner.
                let g_t2 = Graph::new();
                let bound_t2 = aligner.bind(&g_t2);
                teacher_out = aligner_forward(&g_t2, &bound_t2, &batch_reps)?.detach();
            }

            // Student step.
            let g_s = Graph::new();
            let bound_s = student.bind(&g_s);
            let out_s = student_forward(&g_s, &bound_s, &batch.inputs)?;
            let (loss_s, parts_s) =
                student_total_loss(&g_s, &out_s, &teacher_out, &batch.labels, &loss_cfg)?;
            acc.add_student(weight, loss_s.item()?, &parts_s);
            let grads = backward(&loss_s)?;
            apply_gradients(&mut opt_s, &bound_s, &grads, |f| student.for_each_mut(f))?;
            max_ortho_dev = max_ortho_dev.max(student.retract()?);
        }

        let eval = if should_eval(epoch, cfg) {
            Some(evaluate(
                &student,
                Some(&aligner),
                &data.test,
                data.test_reps.as_ref(),
                cfg.metric,
            )?)
        } else {
            None
        };
        let log = acc.into_log(epoch, n, true, eval.as_ref());
        final_train_task_loss = log.task;
        epochs.push(log);
    }

    let final_eval = evaluate(
        &student,
        Some(&aligner),
        &data.test,
        data.test_reps.as_ref(),
        cfg.metric,
    )?;
    let report = TrainReport {
        epochs,
        final_eval,
        final_train_task_loss,
        max_ortho_dev,
        capacity_layers: cfg.capacity_ablation.then_some(extra_layers),
        student_params: student.param_count(),
        aligner_params: Some(aligner.param_count()),
        metric: cfg.metric,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        student,
        aligner: Some(aligner),
    })
}

/// Plain task-supervised training of the bare student — no aligner, no
/// teacher. Shares the student's RNG streams with [`train_joint`], so a
/// joint run with all transfer weights at zero reproduces it bit for bit.
pub fn train_undistilled(data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    if data.test.is_empty() {
        return Err(Error::Contract("evaluation split is empty".into()));
    }
    let loss_cfg = cfg.effective_loss();
    output_width_for(&data.train, loss_cfg.task)?;

    let mut student = StudentParams::init(&student_config(data, cfg)?, cfg.seed)?;
    let mut opt_s = AdamW::new(AdamWConfig::new(cfg.student_lr, cfg.weight_decay))?;
    let mut order_rng = rng::stream(cfg.seed, "order");

    let n = data.train.len();
    let mut max_ortho_dev: f64 = 0.0;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut final_train_task_loss = 0.0;

    for epoch in 1..=cfg.epochs {
        let order = crate::data::permutation(n, &mut order_rng);
        let mut acc = EpochAccumulator::default();

        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.train.gather(chunk)?;
            let weight = chunk.len() as f64;

            let g_s = Graph::new();
            let bound_s = student.bind(&g_s);
            let out_s = student_forward(&g_s, &bound_s, &batch.inputs)?;
            let loss_s = crate::losses::task_loss(&out_s.logits, &batch.labels, loss_cfg.task)?;
            let value = loss_s.item()?;
            acc.l_s += weight * value;
            acc.task += weight * value;
            let grads = backward(&loss_s)?;
            apply_gradients(&mut opt_s, &bound_s, &grads, |f| student.for_each_mut(f))?;
            max_ortho_dev = max_ortho_dev.max(student.retract()?);
        }

        let eval = if should_eval(epoch, cfg) {
            Some(evaluate(&student, None, &data.test, None, cfg.metric)?)
        } else {
            None
        };
        let log = acc.into_log(epoch, n, false, eval.as_ref());
        final_train_task_loss = log.task;
        epochs.push(log);
    }

    let final_eval = evaluate(&student, None, &data.test, None, cfg.metric)?;
    let report = TrainReport {
        epochs,
        final_eval,
        final_train_task_loss,
        max_ortho_dev,
        capacity_layers: None,
        student_params: student.param_count(),
        aligner_params: None,
        metric: cfg.metric,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        report,
        student,
        aligner: None,
    })
}

fn should_eval(epoch: usize, cfg: &TrainConfig) -> bool {
    if epoch == cfg.epochs {
        return true;
    }
    cfg.eval_every > 0 && epoch % cfg.eval_every == 0
}

/// Batch-weighted epoch sums, divided by the example count at the end.
#[derive(Default)]
struct EpochAccumulator {
    l_t: f64,
    l_s: f64,
    task: f64,
    soft: f64,
    manifold: f64,
    aux_t: f64,
    aux_s: f64,
}

impl EpochAccumulator {
    fn add_student(&mut self, weight: f64, total: f64, parts: &crate::losses::StudentLossParts) {
        self.l_s += weight * total;
        self.task += weight * parts.task;
        self.soft += weight * parts.soft;
        self.manifold += weight * parts.manifold;
        self.aux_s += weight * parts.aux;
    }

    fn into_log(self, epoch: usize, n: usize, with_aligner: bool, eval: Option<&EvalScores>) -> EpochLog {
        let n = n as f64;
        EpochLog {
            epoch,
            l_t: with_aligner.then_some(self.l_t / n),
            l_s: self.l_s / n,
            task: self.task / n,
            soft: self.soft / n,
            manifold: self.manifold / n,
            aux_t: with_aligner.then_some(self.aux_t / n),
            aux_s: self.aux_s / n,
            eval_main: eval.map(|e| e.student_main),
            eval_aux: eval.map(|e| e.student_aux),
        }
    }
}

fn apply_gradients(
    opt: &mut AdamW,
    bound: &BoundParams,
    grads: &Gradients,
    for_each: impl FnOnce(&mut dyn FnMut(&str, &mut Matrix) -> Result<()>) -> Result<()>,
) -> Result<()> {
    let by_name: HashMap<&str, &Matrix> = bound
        .named()
        .iter()
        .map(|(name, node)| {
            let g = grads
                .get(node)
                .expect("every leaf receives a gradient");
            (name.as_str(), g)
        })
        .collect();
    opt.begin_step();
    for_each(&mut |name, param| {
        let g = by_name.get(name).ok_or_else(|| {
            Error::Contract(format!("no bound node for parameter '{name}'"))
        })?;
        opt.update(name, param, g)
    })
}

/// Scores logits against labels under the chosen metric. Classification
/// prediction is the argmax per row, ties resolved to the lowest index.
pub fn score_logits(logits: &Matrix, labels: &Labels, metric: Metric) -> Result<f64> {
    match metric {
        Metric::Accuracy | Metric::Mcc => {
            let classes = labels.classes()?;
            let preds: Vec<usize> = (0..logits.rows()).map(|i| argmax(logits.row(i))).collect();
            match metric {
                Metric::Accuracy => analysis::accuracy(&preds, classes),
                _ => analysis::mcc(&preds, classes),
            }
        }
        Metric::Pearson => {
            if logits.cols() != 1 {
                return Err(Error::Contract(format!(
                    "regression scoring expects one output column, got {}",
                    logits.cols()
                )));
            }
            let preds: Vec<f64> = logits.data().to_vec();
            analysis::pearson(&preds, labels.values()?)
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Held-out evaluation of both models' heads. The student is scored on the
/// raw inputs; the aligner (when given, with representations) on the teacher
/// representations of the same examples.
pub fn evaluate(
    student: &StudentParams,
    aligner: Option<&AlignerParams>,
    split: &Dataset,
    split_reps: Option<&RepresentationTable>,
    metric: Metric,
) -> Result<EvalScores> {
    if split.is_empty() {
        return Err(Error::Contract("evaluation split is empty".into()));
    }
    let g = Graph::new();
    let bound = student.bind(&g);
    let out = student_forward(&g, &bound, &split.inputs)?;
    let student_main = score_logits(&out.logits.value(), &split.labels, metric)?;
    let aux_logits = out
        .aux_logits
        .as_ref()
        .ok_or_else(|| Error::Contract("student forward lost its auxiliary head".into()))?;
    let student_aux = score_logits(&aux_logits.value(), &split.labels, metric)?;

    let mut aligner_main = None;
    let mut aligner_aux = None;
    if let (Some(params), Some(reps)) = (aligner, split_reps) {
        if reps.count() != split.len() {
            return Err(Error::Contract(format!(
                "representation table has {} rows for {} evaluation examples",
                reps.count(),
                split.len()
            )));
        }
        let g = Graph::new();
        let bound = params.bind(&g);
        let out = aligner_forward(&g, &bound, &reps.rows)?;
        aligner_main = Some(score_logits(&out.logits.value(), &split.labels, metric)?);
        aligner_aux = match &out.aux_logits {
            Some(logits) => Some(score_logits(&logits.value(), &split.labels, metric)?),
            None => None,
        };
    }
    Ok(EvalScores {
        student_main,
        student_aux,
        aligner_main,
        aligner_aux,
    })
}
