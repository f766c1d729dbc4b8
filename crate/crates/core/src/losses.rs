//! Distillation losses.
//!
//! The aligner trains on its task loss plus a gamma-weighted auxiliary-head
//! task loss. The student trains on a blend of its own task loss and a
//! temperature-softened match to the aligner's outputs, mirrored on the
//! auxiliary heads, plus a beta-weighted manifold loss between the projected
//! batches. Teacher-side quantities always enter the student graph as
//! constants, so no student gradient reaches the aligner.
//!
//! `verify_prop1` checks the ordering guarantees relating the three manifold
//! variants on plain matrices, independently of the graph ops.

use crate::data::Labels;
use crate::error::{dim_err, Error, Result};
use crate::models::{DetachedOutputs, ForwardOutputs};
use crate::tensor::{Graph, Matrix, Node};
use crate::TaskKind;

/// Which distance couples the projected batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldVariant {
    /// One minus the inner product of the batch means.
    Cosine,
    /// Euclidean distance between the batch means.
    Euclid,
    /// Mean Euclidean distance between paired rows.
    Elementwise,
}

impl ManifoldVariant {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldVariant::Cosine => "cosine",
            ManifoldVariant::Euclid => "euclid",
            ManifoldVariant::Elementwise => "elementwise",
        }
    }
}

impl std::str::FromStr for ManifoldVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ManifoldVariant::Cosine),
            "euclid" => Ok(ManifoldVariant::Euclid),
            "elementwise" => Ok(ManifoldVariant::Elementwise),
            other => Err(Error::Parameter(format!(
                "unknown manifold variant '{other}' (expected cosine, euclid, or elementwise)"
            ))),
        }
    }
}

/// Loss weights and switches shared by both models.
#[derive(Clone, Debug)]
pub struct LossConfig {
    /// Blend between hard task loss and soft output matching, in `[0, 1]`.
    pub alpha: f64,
    /// Weight of the manifold loss.
    pub beta: f64,
    /// Weight of the auxiliary-head losses.
    pub gamma: f64,
    /// Softmax temperature for output matching.
    pub tau: f64,
    pub variant: ManifoldVariant,
    pub task: TaskKind,
    /// Normalize the batch means before the cosine inner product.
    pub normalize_cosine: bool,
    /// Mirror the soft output match on the auxiliary heads; when off the
    /// auxiliary block is the plain task loss at full weight.
    pub aux_logit_match: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.0,
            gamma: 1.0,
            tau: 5.0,
            variant: ManifoldVariant::Euclid,
            task: TaskKind::Classification,
            normalize_cosine: true,
            aux_logit_match: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::Parameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Parameter(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Task loss: mean cross-entropy after a temperature-1 softmax for
/// classification, mean squared error for regression.
pub fn task_loss(logits: &Node, labels: &Labels, kind: TaskKind) -> Result<Node> {
    let (rows, cols) = logits.shape();
    if labels.len() != rows {
        return Err(Error::Data(format!(
            "{} labels for a batch of {rows}",
            labels.len()
        )));
    }
    match kind {
        TaskKind::Classification => {
            let classes = labels.classes()?;
            logits.softmax_t(1.0)?.cross_entropy(classes)
        }
        TaskKind::Regression => {
            if cols != 1 {
                return Err(Error::Data(format!(
                    "regression expects a single output column, got {cols}"
                )));
            }
            let targets = Matrix::new(rows, 1, labels.values()?.to_vec())?;
            logits.squared_error(&targets)
        }
    }
}

/// Soft output matching: mean over the batch of the Euclidean distance
/// between the tempered output maps of teacher and student logits. The map is
/// a temperature-`tau` softmax for classification and division by `tau` for
/// regression. The teacher side is a constant.
pub fn logit_match_loss(
    g: &Graph,
    teacher_logits: &Matrix,
    student_logits: &Node,
    tau: f64,
    kind: TaskKind,
) -> Result<Node> {
    if teacher_logits.shape() != student_logits.shape() {
        return Err(dim_err(
            "logit_match_loss",
            teacher_logits.shape(),
            student_logits.shape(),
        ));
    }
    let teacher = g.constant(teacher_logits.clone());
    let (phi_t, phi_s) = match kind {
        TaskKind::Classification => (
            teacher.softmax_t(tau)?,
            student_logits.softmax_t(tau)?,
        ),
        TaskKind::Regression => {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::Parameter(format!(
                    "tau must be positive, got {tau}"
                )));
            }
            (teacher.scale(1.0 / tau)?, student_logits.scale(1.0 / tau)?)
        }
    };
    phi_t.sub(&phi_s)?.row_l2()?.col_mean()
}

/// Manifold loss between a constant teacher-side projected batch and the
/// student-side projected batch.
pub fn manifold_loss(
    g: &Graph,
    teacher_proj: &Matrix,
    student_proj: &Node,
    variant: ManifoldVariant,
    normalize_cosine: bool,
) -> Result<Node> {
    if teacher_proj.shape() != student_proj.shape() {
        return Err(dim_err(
            "manifold_loss",
            teacher_proj.shape(),
            student_proj.shape(),
        ));
    }
    let teacher = g.constant(teacher_proj.clone());
    match variant {
        ManifoldVariant::Elementwise => teacher
            .sub(student_proj)?
            .row_l2()?
            .col_mean(),
        ManifoldVariant::Euclid => teacher
            .col_mean()?
            .sub(&student_proj.col_mean()?)?
            .row_l2(),
        ManifoldVariant::Cosine => {
            let m = teacher_proj.cols();
            let mut t_mean = teacher.col_mean()?;
            let mut s_mean = student_proj.col_mean()?;
            if normalize_cosine {
                for (side, mean) in [("teacher", &t_mean), ("student", &s_mean)] {
                    if mean.value().row_l2_norms().get(0, 0) == 0.0 {
                        return Err(Error::Numeric(format!(
                            "degenerate batch: zero-norm {side} projection mean under normalized cosine"
                        )));
                    }
                }
                t_mean = t_mean.row_normalize()?;
                s_mean = s_mean.row_normalize()?;
            }
            let dot = t_mean.mul(&s_mean)?.row_mean()?.scale(m as f64)?;
            g.scalar(1.0)?.sub(&dot)
        }
    }
}

/// Per-batch loss components, recorded unweighted.
#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct StudentLossParts {
    pub task: f64,
    pub soft: f64,
    pub aux_task: f64,
    pub aux_soft: f64,
    /// Combined auxiliary block before the gamma weight.
    pub aux: f64,
    pub manifold: f64,
}

/// Per-batch aligner loss components, recorded unweighted.
#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct AlignerLossParts {
    pub task: f64,
    pub aux_task: f64,
}

/// Aligner training loss: task loss plus gamma times the auxiliary-head task
/// loss.
pub fn aligner_total_loss(
    out: &ForwardOutputs,
    labels: &Labels,
    cfg: &LossConfig,
) -> Result<(Node, AlignerLossParts)> {
    cfg.validate()?;
    let task = task_loss(&out.logits, labels, cfg.task)?;
    let mut parts = AlignerLossParts {
        task: task.item()?,
        aux_task: 0.0,
    };
    if cfg.gamma == 0.0 {
        return Ok((task, parts));
    }
    let aux_logits = out.aux_logits.as_ref().ok_or_else(|| {
        Error::Contract("gamma > 0 needs an aligner with an auxiliary head".into())
    })?;
    let aux = task_loss(aux_logits, labels, cfg.task)?;
    parts.aux_task = aux.item()?;
    let weighted = weight(&aux, cfg.gamma)?;
    Ok((task.add(&weighted)?, parts))
}

/// Student training loss.
///
/// `(1 - alpha)` task loss, plus `alpha` soft output matching against the
/// detached aligner outputs, plus `gamma` times the same blend on the
/// auxiliary heads, plus `beta` times the manifold loss. Terms with an
/// exactly zero weight are never built, so an `alpha = beta = gamma = 0`
/// graph is bitwise-identical to a plain task-loss graph.
pub fn student_total_loss(
    g: &Graph,
    out: &ForwardOutputs,
    teacher: &DetachedOutputs,
    labels: &Labels,
    cfg: &LossConfig,
) -> Result<(Node, StudentLossParts)> {
    cfg.validate()?;
    let mut parts = StudentLossParts::default();
    let mut total: Option<Node> = None;
    let push = |term: Node, w: f64, total: &mut Option<Node>| -> Result<()> {
        let weighted = weight(&term, w)?;
        *total = Some(match total.take() {
            Some(t) => t.add(&weighted)?,
            None => weighted,
        });
        Ok(())
    };

    if cfg.alpha < 1.0 {
        let task = task_loss(&out.logits, labels, cfg.task)?;
        parts.task = task.item()?;
        push(task, 1.0 - cfg.alpha, &mut total)?;
    }
    if cfg.alpha > 0.0 {
        let soft = logit_match_loss(g, &teacher.logits, &out.logits, cfg.tau, cfg.task)?;
        parts.soft = soft.item()?;
        push(soft, cfg.alpha, &mut total)?;
    }
    if cfg.gamma > 0.0 {
        let student_aux = out.aux_logits.as_ref().ok_or_else(|| {
            Error::Contract("gamma > 0 needs a student auxiliary head".into())
        })?;
        let aux_block = if cfg.aux_logit_match {
            let teacher_aux = teacher.aux_logits.as_ref().ok_or_else(|| {
                Error::Contract("gamma > 0 needs detached auxiliary teacher logits".into())
            })?;
            let mut block: Option<Node> = None;
            if cfg.alpha < 1.0 {
                let aux_task = task_loss(student_aux, labels, cfg.task)?;
                parts.aux_task = aux_task.item()?;
                push(aux_task, 1.0 - cfg.alpha, &mut block)?;
            }
            if cfg.alpha > 0.0 {
                let aux_soft =
                    logit_match_loss(g, teacher_aux, student_aux, cfg.tau, cfg.task)?;
                parts.aux_soft = aux_soft.item()?;
                push(aux_soft, cfg.alpha, &mut block)?;
            }
            block.expect("alpha in [0,1] always keeps one term")
        } else {
            let aux_task = task_loss(student_aux, labels, cfg.task)?;
            parts.aux_task = aux_task.item()?;
            aux_task
        };
        parts.aux = aux_block.item()?;
        push(aux_block, cfg.gamma, &mut total)?;
    }
    if cfg.beta > 0.0 {
        let student_proj = out.projection.as_ref().ok_or_else(|| {
            Error::Contract("beta > 0 needs a student projection head".into())
        })?;
        let teacher_proj = teacher.projection.as_ref().ok_or_else(|| {
            Error::Contract("beta > 0 needs a detached teacher projection".into())
        })?;
        let manifold = manifold_loss(
            g,
            teacher_proj,
            student_proj,
            cfg.variant,
            cfg.normalize_cosine,
        )?;
        parts.manifold = manifold.item()?;
        push(manifold, cfg.beta, &mut total)?;
    }
    let total = total.expect("alpha in [0,1] always keeps one term");
    Ok((total, parts))
}

/// Scales only when the weight differs from one, keeping weight-1 terms
/// bitwise-identical to the unweighted node.
fn weight(term: &Node, w: f64) -> Result<Node> {
    if w == 1.0 {
        Ok(term.clone())
    } else {
        term.scale(w)
    }
}

/// Ordering facts relating the three manifold variants on one batch pair.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Prop1Report {
    pub l_elementwise: f64,
    pub l_euclid: f64,
    /// Cosine loss on normalized means; `None` when a mean has zero norm.
    pub l_cosine: Option<f64>,
    /// `2 * |mean_ts| * |mean_s| * l_cosine` (zero when cosine is inapplicable).
    pub bound_rhs: f64,
    /// `l_elementwise >= l_euclid` within slack.
    pub holds_triangle: bool,
    /// `l_euclid^2 >= bound_rhs` within slack.
    pub holds_amgm: bool,
}

const PROP1_SLACK: f64 = 1e-9;

/// Computes all three manifold losses on plain matrices (cosine on normalized
/// means) and checks the two ordering bounds, each within a `1e-9` slack.
pub fn verify_prop1(p_ts: &Matrix, p_s: &Matrix) -> Result<Prop1Report> {
    if p_ts.shape() != p_s.shape() {
        return Err(dim_err("verify_prop1", p_ts.shape(), p_s.shape()));
    }
    let n = p_ts.rows();
    let mut l_elementwise = 0.0;
    for r in 0..n {
        let d2: f64 = p_ts
            .row(r)
            .iter()
            .zip(p_s.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        l_elementwise += d2.sqrt();
    }
    l_elementwise /= n as f64;

    let mean_ts = p_ts.col_mean();
    let mean_s = p_s.col_mean();
    let l_euclid = mean_ts.sub(&mean_s)?.row_l2_norms().get(0, 0);

    let norm_ts = mean_ts.row_l2_norms().get(0, 0);
    let norm_s = mean_s.row_l2_norms().get(0, 0);
    let l_cosine = if norm_ts > 0.0 && norm_s > 0.0 {
        let dot: f64 = mean_ts
            .data()
            .iter()
            .zip(mean_s.data())
            .map(|(a, b)| a * b)
            .sum();
        Some(1.0 - dot / (norm_ts * norm_s))
    } else {
        None
    };
    let bound_rhs = l_cosine.map_or(0.0, |c| 2.0 * norm_ts * norm_s * c);

    Ok(Prop1Report {
        l_elementwise,
        l_euclid,
        l_cosine,
        bound_rhs,
        holds_triangle: l_elementwise >= l_euclid - PROP1_SLACK,
        holds_amgm: l_euclid * l_euclid >= bound_rhs - PROP1_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn task_loss_uniform_logits_hit_ln2() {
        let g = Graph::new();
        let logits = g.constant(Matrix::new(1, 2, vec![0.0, 0.0]).unwrap());
        let loss = task_loss(&logits, &Labels::Classes(vec![0]), TaskKind::Classification)
            .unwrap();
        assert_relative_eq!(
            loss.item().unwrap(),
            std::f64::consts::LN_2,
            max_relative = 1e-9
        );
    }

    #[test]
    fn task_loss_regression_zero_at_exact_fit() {
        let g = Graph::new();
        let logits = g.constant(Matrix::new(2, 1, vec![0.5, -1.5]).unwrap());
        let loss = task_loss(
            &logits,
            &Labels::Values(vec![0.5, -1.5]),
            TaskKind::Regression,
        )
        .unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);
    }

    #[test]
    fn task_loss_rejects_mismatches() {
        let g = Graph::new();
        let logits = g.constant(Matrix::zeros(2, 2));
        assert!(task_loss(&logits, &Labels::Classes(vec![0]), TaskKind::Classification).is_err());
        assert!(task_loss(
            &logits,
            &Labels::Values(vec![0.0, 1.0]),
            TaskKind::Regression
        )
        .is_err());
        assert!(task_loss(
            &logits,
            &Labels::Values(vec![0.0, 1.0]),
            TaskKind::Classification
        )
        .is_err());
    }

    #[test]
    fn logit_match_hand_example() {
        // Rows [2, 0] vs [0, 2] at tau = 5.
        let g = Graph::new();
        let teacher = Matrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        let student = g.constant(Matrix::new(1, 2, vec![0.0, 2.0]).unwrap());
        let loss =
            logit_match_loss(&g, &teacher, &student, 5.0, TaskKind::Classification).unwrap();
        assert_relative_eq!(loss.item().unwrap(), 0.27913, max_relative = 1e-4);
    }

    #[test]
    fn logit_match_identical_logits_is_zero() {
        let g = Graph::new();
        let teacher = Matrix::new(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let student = g.constant(teacher.clone());
        let loss =
            logit_match_loss(&g, &teacher, &student, 2.0, TaskKind::Classification).unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);
    }

    #[test]
    fn logit_match_regression_divides_by_tau() {
        let g = Graph::new();
        let teacher = Matrix::new(1, 1, vec![1.0]).unwrap();
        let student = g.constant(Matrix::new(1, 1, vec![4.0]).unwrap());
        let loss = logit_match_loss(&g, &teacher, &student, 1.0, TaskKind::Regression).unwrap();
        assert_relative_eq!(loss.item().unwrap(), 3.0, max_relative = 1e-12);
        let loss = logit_match_loss(&g, &teacher, &student, 5.0, TaskKind::Regression).unwrap();
        assert_relative_eq!(loss.item().unwrap(), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn manifold_hand_examples_single_pair() {
        // Single pair (1,0) vs (0,1).
        let t = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let s_val = Matrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        let run = |variant| {
            let g = Graph::new();
            let s = g.constant(s_val.clone());
            manifold_loss(&g, &t, &s, variant, true)
                .unwrap()
                .item()
                .unwrap()
        };
        assert_relative_eq!(run(ManifoldVariant::Cosine), 1.0, max_relative = 1e-5);
        assert_relative_eq!(run(ManifoldVariant::Euclid), 1.41421, max_relative = 1e-5);
        assert_relative_eq!(
            run(ManifoldVariant::Elementwise),
            1.41421,
            max_relative = 1e-5
        );
    }

    #[test]
    fn manifold_hand_examples_crossed_batch() {
        // Batch {(1,0),(0,1)} vs {(0,1),(1,0)}: equal means.
        let t = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s_val = Matrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let run = |variant| {
            let g = Graph::new();
            let s = g.constant(s_val.clone());
            manifold_loss(&g, &t, &s, variant, true)
                .unwrap()
                .item()
                .unwrap()
        };
        assert_relative_eq!(run(ManifoldVariant::Euclid), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            run(ManifoldVariant::Elementwise),
            1.41421,
            max_relative = 1e-5
        );
        assert_relative_eq!(run(ManifoldVariant::Cosine), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_mean_when_normalizing() {
        let t = Matrix::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let s_val = Matrix::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let g = Graph::new();
        let s = g.constant(s_val);
        assert!(matches!(
            manifold_loss(&g, &t, &s, ManifoldVariant::Cosine, true),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn unnormalized_cosine_uses_raw_means() {
        // Means (2,0) and (1,0): raw inner product 2, loss 1 - 2 = -1.
        let t = Matrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        let s_val = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let g = Graph::new();
        let s = g.constant(s_val);
        let loss = manifold_loss(&g, &t, &s, ManifoldVariant::Cosine, false)
            .unwrap()
            .item()
            .unwrap();
        assert_relative_eq!(loss, -1.0, max_relative = 1e-12);
    }

    #[test]
    fn prop1_hand_examples() {
        let t = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = Matrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let report = verify_prop1(&t, &s).unwrap();
        assert_relative_eq!(report.l_euclid, 0.0, epsilon = 1e-12);
        assert_relative_eq!(report.l_elementwise, 1.41421, max_relative = 1e-5);
        assert_relative_eq!(report.l_cosine.unwrap(), 0.0, epsilon = 1e-12);
        assert!(report.holds_triangle);
        assert!(report.holds_amgm);
    }

    #[test]
    fn prop1_marks_degenerate_cosine() {
        let t = Matrix::new(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        let s = Matrix::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let report = verify_prop1(&t, &s).unwrap();
        assert!(report.l_cosine.is_none());
        assert_eq!(report.bound_rhs, 0.0);
        assert!(report.holds_triangle && report.holds_amgm);
    }

    fn fixture_outputs(g: &Graph) -> (ForwardOutputs, DetachedOutputs, Labels) {
        let logits = g.leaf(Matrix::new(2, 2, vec![0.4, -0.2, -1.0, 0.7]).unwrap());
        let hidden = g.leaf(Matrix::new(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.5]).unwrap());
        let projection = g.leaf(Matrix::new(2, 2, vec![0.3, 0.1, -0.2, 0.4]).unwrap());
        let aux_logits = g.leaf(Matrix::new(2, 2, vec![0.1, 0.1, -0.3, 0.2]).unwrap());
        let out = ForwardOutputs {
            hidden,
            logits,
            projection: Some(projection),
            aux_logits: Some(aux_logits),
        };
        let teacher = DetachedOutputs {
            logits: Matrix::new(2, 2, vec![1.2, -0.8, -0.6, 0.9]).unwrap(),
            projection: Some(Matrix::new(2, 2, vec![0.5, -0.1, 0.2, 0.6]).unwrap()),
            aux_logits: Some(Matrix::new(2, 2, vec![0.8, -0.2, -0.4, 0.3]).unwrap()),
        };
        (out, teacher, Labels::Classes(vec![0, 1]))
    }

    #[test]
    fn student_total_decomposes_over_weight_grid() {
        for &alpha in &[0.0, 0.5, 1.0] {
            for &beta in &[0.0, 0.5, 1.0] {
                for &gamma in &[0.0, 0.5, 1.0] {
                    let g = Graph::new();
                    let (out, teacher, labels) = fixture_outputs(&g);
                    let cfg = LossConfig {
                        alpha,
                        beta,
                        gamma,
                        ..LossConfig::default()
                    };
                    let (total, p) =
                        student_total_loss(&g, &out, &teacher, &labels, &cfg).unwrap();
                    let expected = (1.0 - alpha) * p.task
                        + alpha * p.soft
                        + gamma * p.aux
                        + beta * p.manifold;
                    assert!(
                        (total.item().unwrap() - expected).abs() <= 1e-12,
                        "decomposition off at alpha={alpha} beta={beta} gamma={gamma}"
                    );
                    let aux_expected = (1.0 - alpha) * p.aux_task + alpha * p.aux_soft;
                    if gamma > 0.0 {
                        assert!((p.aux - aux_expected).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn aligner_total_decomposes() {
        for &gamma in &[0.0, 0.5, 1.0] {
            let g = Graph::new();
            let (out, _, labels) = fixture_outputs(&g);
            let cfg = LossConfig {
                gamma,
                ..LossConfig::default()
            };
            let (total, p) = aligner_total_loss(&out, &labels, &cfg).unwrap();
            let expected = p.task + gamma * p.aux_task;
            assert!((total.item().unwrap() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn aux_match_flag_falls_back_to_plain_task_loss() {
        let g = Graph::new();
        let (out, teacher, labels) = fixture_outputs(&g);
        let cfg = LossConfig {
            aux_logit_match: false,
            ..LossConfig::default()
        };
        let (_, p) = student_total_loss(&g, &out, &teacher, &labels, &cfg).unwrap();
        assert_eq!(p.aux, p.aux_task);
        assert_eq!(p.aux_soft, 0.0);
    }

    #[test]
    fn teacher_side_receives_no_gradient() {
        // The student loss must not reach any leaf through the detached
        // teacher values: gradients exist only for student-side leaves.
        let g = Graph::new();
        let (out, teacher, labels) = fixture_outputs(&g);
        let cfg = LossConfig::default();
        let (total, _) = student_total_loss(&g, &out, &teacher, &labels, &cfg).unwrap();
        let grads = crate::tensor::backward(&total).unwrap();
        assert!(grads.get(&out.logits).is_some());
        assert!(grads.get(out.projection.as_ref().unwrap()).is_some());
        assert!(grads.get(out.aux_logits.as_ref().unwrap()).is_some());
        // Swapping the teacher values changes the loss, proving they matter,
        // while the gradient map stays the same size (nothing new reachable).
        let g2 = Graph::new();
        let (out2, mut teacher2, labels2) = fixture_outputs(&g2);
        teacher2.logits = Matrix::new(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let (total2, _) = student_total_loss(&g2, &out2, &teacher2, &labels2, &cfg).unwrap();
        assert_ne!(total.item().unwrap(), total2.item().unwrap());
        assert_eq!(grads.len(), crate::tensor::backward(&total2).unwrap().len());
    }

    #[test]
    fn batch_permutation_invariance() {
        // Mean-reduced losses must not depend on row order when rows are
        // permuted consistently on both sides.
        let t = Matrix::new(3, 2, vec![1.0, 0.0, 0.0, 2.0, -1.0, 1.0]).unwrap();
        let s_val = Matrix::new(3, 2, vec![0.5, 0.5, 1.0, 1.0, -0.5, 0.0]).unwrap();
        let perm = [2usize, 0, 1];
        let t_p = t.gather_rows(&perm).unwrap();
        let s_p = s_val.gather_rows(&perm).unwrap();
        for variant in [
            ManifoldVariant::Cosine,
            ManifoldVariant::Euclid,
            ManifoldVariant::Elementwise,
        ] {
            let g = Graph::new();
            let a = manifold_loss(&g, &t, &g.constant(s_val.clone()), variant, true)
                .unwrap()
                .item()
                .unwrap();
            let b = manifold_loss(&g, &t_p, &g.constant(s_p.clone()), variant, true)
                .unwrap()
                .item()
                .unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let g = Graph::new();
        let a = logit_match_loss(&g, &t, &g.constant(s_val.clone()), 3.0, TaskKind::Classification)
            .unwrap()
            .item()
            .unwrap();
        let b = logit_match_loss(&g, &t_p, &g.constant(s_p.clone()), 3.0, TaskKind::Classification)
            .unwrap()
            .item()
            .unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn loss_config_validation() {
        let mut cfg = LossConfig::default();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = LossConfig::default();
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LossConfig::default();
        cfg.beta = -0.1;
        assert!(cfg.validate().is_err());
        assert!(LossConfig::default().validate().is_ok());
    }
}
