//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] owns an append-only tape of nodes. Every operation evaluates
//! eagerly and records which earlier nodes it consumed, so tape order is a
//! topological order and [`backward`] can run the chain rule in a single
//! reverse sweep from a scalar root to the leaves.
//!
//! Graphs are intentionally `!Send`: each graph stays on the thread that
//! built it. Plain [`Matrix`] parameters move freely between threads, so
//! concurrent runs each build their own graphs.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{dim_err, Error, Result};
use crate::tensor::Matrix;

enum Op {
    /// Trainable parameter; receives an entry in the gradient map.
    Leaf,
    /// Fixed input; backward stops here.
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    /// Adds a `1 x c` row to every row of the first operand.
    AddRow { x: usize, row: usize },
    Mul(usize, usize),
    Tanh(usize),
    Relu(usize),
    /// Row softmax of `x / tau`.
    SoftmaxT { x: usize, tau: f64 },
    RowMean(usize),
    ColMean(usize),
    RowL2(usize),
    /// Each row scaled to unit Euclidean norm.
    RowNormalize(usize),
    Scale { x: usize, factor: f64 },
    /// Mean over rows of the squared Euclidean distance to a fixed target.
    SquaredError { pred: usize, target: Matrix },
    /// Mean over rows of `-ln p[i, class_i]` for fixed class labels.
    CrossEntropy { probs: usize, classes: Vec<usize> },
}

struct NodeData {
    value: Matrix,
    op: Op,
}

/// Append-only tape of eagerly evaluated nodes.
#[derive(Clone, Default)]
pub struct Graph {
    tape: Rc<RefCell<Vec<NodeData>>>,
}

/// Handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Node {
    graph: Graph,
    id: usize,
}

impl std::fmt::Debug for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Node")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tape.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable parameter node.
    pub fn leaf(&self, value: Matrix) -> Node {
        self.push(value, Op::Leaf)
    }

    /// Fixed-input node; gradients never flow past it.
    pub fn constant(&self, value: Matrix) -> Node {
        self.push(value, Op::Constant)
    }

    /// Constant `1 x 1` node.
    pub fn scalar(&self, v: f64) -> Result<Node> {
        Ok(self.constant(Matrix::new(1, 1, vec![v])?))
    }

    fn push(&self, value: Matrix, op: Op) -> Node {
        let mut tape = self.tape.borrow_mut();
        tape.push(NodeData { value, op });
        Node {
            graph: self.clone(),
            id: tape.len() - 1,
        }
    }

    fn same_tape(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.tape, &other.tape)
    }
}

impl Node {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.with(Matrix::shape)
    }

    pub fn value(&self) -> Matrix {
        self.with(Matrix::clone)
    }

    /// Value of a `1 x 1` node.
    pub fn item(&self) -> Result<f64> {
        if self.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "item() needs a 1x1 node, got {}x{}",
                self.shape().0,
                self.shape().1
            )));
        }
        Ok(self.with(|m| m.get(0, 0)))
    }

    fn with<R>(&self, f: impl FnOnce(&Matrix) -> R) -> R {
        let tape = self.graph.tape.borrow();
        f(&tape[self.id].value)
    }

    fn with2<R>(&self, rhs: &Node, f: impl FnOnce(&Matrix, &Matrix) -> R) -> R {
        let tape = self.graph.tape.borrow();
        f(&tape[self.id].value, &tape[rhs.id].value)
    }

    fn check_same_graph(&self, rhs: &Node) -> Result<()> {
        if !self.graph.same_tape(&rhs.graph) {
            return Err(Error::Contract(
                "operands belong to different graphs".into(),
            ));
        }
        Ok(())
    }

    pub fn matmul(&self, rhs: &Node) -> Result<Node> {
        self.check_same_graph(rhs)?;
        let value = self.with2(rhs, |a, b| a.matmul(b))?;
        Ok(self.graph.push(value, Op::MatMul(self.id, rhs.id)))
    }

    pub fn add(&self, rhs: &Node) -> Result<Node> {
        self.check_same_graph(rhs)?;
        let value = self.with2(rhs, |a, b| a.add(b))?;
        Ok(self.graph.push(value, Op::Add(self.id, rhs.id)))
    }

    /// `self - rhs`, composed from scale and add.
    pub fn sub(&self, rhs: &Node) -> Result<Node> {
        self.add(&rhs.scale(-1.0)?)
    }

    /// Broadcast-adds a `1 x c` row to every row of `self`.
    pub fn add_row(&self, row: &Node) -> Result<Node> {
        self.check_same_graph(row)?;
        let value = self.with2(row, |x, r| -> Result<Matrix> {
            if r.rows() != 1 || r.cols() != x.cols() {
                return Err(dim_err("add_row", x.shape(), r.shape()));
            }
            Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) + r.get(0, j))
        })?;
        Ok(self.graph.push(
            value,
            Op::AddRow {
                x: self.id,
                row: row.id,
            },
        ))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Node) -> Result<Node> {
        self.check_same_graph(rhs)?;
        let value = self.with2(rhs, |a, b| a.hadamard(b))?;
        Ok(self.graph.push(value, Op::Mul(self.id, rhs.id)))
    }

    pub fn tanh(&self) -> Result<Node> {
        let value = self.with(|x| {
            Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j).tanh())
        })?;
        Ok(self.graph.push(value, Op::Tanh(self.id)))
    }

    pub fn relu(&self) -> Result<Node> {
        let value = self.with(|x| {
            Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j).max(0.0))
        })?;
        Ok(self.graph.push(value, Op::Relu(self.id)))
    }

    /// Row softmax of `self / tau`, computed with max subtraction.
    pub fn softmax_t(&self, tau: f64) -> Result<Node> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Parameter(format!(
                "softmax temperature must be positive and finite, got {tau}"
            )));
        }
        let value = self.with(|x| softmax_rows(x, tau));
        Ok(self.graph.push(value, Op::SoftmaxT { x: self.id, tau }))
    }

    /// Mean of each row; `r x c` becomes `r x 1`.
    pub fn row_mean(&self) -> Result<Node> {
        let value = self.with(Matrix::row_mean);
        Ok(self.graph.push(value, Op::RowMean(self.id)))
    }

    /// Mean of each column; `r x c` becomes `1 x c`.
    pub fn col_mean(&self) -> Result<Node> {
        let value = self.with(Matrix::col_mean);
        Ok(self.graph.push(value, Op::ColMean(self.id)))
    }

    /// Euclidean norm of each row; `r x c` becomes `r x 1`.
    ///
    /// The norm is not differentiable at an all-zero row; backward uses the
    /// zero subgradient there.
    pub fn row_l2(&self) -> Result<Node> {
        let value = self.with(Matrix::row_l2_norms);
        Ok(self.graph.push(value, Op::RowL2(self.id)))
    }

    /// Scales each row to unit Euclidean norm; errors on a zero-norm row.
    pub fn row_normalize(&self) -> Result<Node> {
        let value = self.with(|x| -> Result<Matrix> {
            let norms = x.row_l2_norms();
            for r in 0..x.rows() {
                if norms.get(r, 0) == 0.0 {
                    return Err(Error::Numeric(format!(
                        "row_normalize: row {r} has zero norm"
                    )));
                }
            }
            Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) / norms.get(i, 0))
        })?;
        Ok(self.graph.push(value, Op::RowNormalize(self.id)))
    }

    pub fn scale(&self, factor: f64) -> Result<Node> {
        if !factor.is_finite() {
            return Err(Error::Parameter(format!(
                "scale factor must be finite, got {factor}"
            )));
        }
        let value = self.with(|x| x.scale(factor))?;
        Ok(self.graph.push(
            value,
            Op::Scale {
                x: self.id,
                factor,
            },
        ))
    }

    /// Scalar mean over rows of the squared Euclidean distance to `target`.
    pub fn squared_error(&self, target: &Matrix) -> Result<Node> {
        let value = self.with(|pred| -> Result<Matrix> {
            if pred.shape() != target.shape() {
                return Err(dim_err("squared_error", pred.shape(), target.shape()));
            }
            let total: f64 = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            Matrix::new(1, 1, vec![total / pred.rows() as f64])
        })?;
        Ok(self.graph.push(
            value,
            Op::SquaredError {
                pred: self.id,
                target: target.clone(),
            },
        ))
    }

    /// Scalar mean over rows of `-ln self[i, classes[i]]`.
    ///
    /// `self` must hold strictly positive probabilities (e.g. a softmax
    /// output); `classes` must have one entry per row.
    pub fn cross_entropy(&self, classes: &[usize]) -> Result<Node> {
        let value = self.with(|p| -> Result<Matrix> {
            if classes.len() != p.rows() {
                return Err(Error::Data(format!(
                    "cross_entropy: {} labels for {} rows",
                    classes.len(),
                    p.rows()
                )));
            }
            let mut total = 0.0;
            for (i, &c) in classes.iter().enumerate() {
                if c >= p.cols() {
                    return Err(Error::Data(format!(
                        "cross_entropy: class {c} out of range for {} columns at row {i}",
                        p.cols()
                    )));
                }
                let v = p.get(i, c);
                if v <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "cross_entropy: non-positive probability {v} at row {i}"
                    )));
                }
                total -= v.ln();
            }
            Matrix::new(1, 1, vec![total / p.rows() as f64])
        })?;
        Ok(self.graph.push(
            value,
            Op::CrossEntropy {
                probs: self.id,
                classes: classes.to_vec(),
            },
        ))
    }
}

fn softmax_rows(x: &Matrix, tau: f64) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let scaled: Vec<f64> = x.row(r).iter().map(|v| v / tau).collect();
        let max = scaled.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.set(r, c, e / sum);
        }
    }
    out
}

/// Gradients of a scalar root with respect to every leaf of its graph.
///
/// Leaves with no path to the root hold zeros.
#[derive(Debug)]
pub struct Gradients {
    by_id: HashMap<usize, Matrix>,
}

impl Gradients {
    pub fn get(&self, leaf: &Node) -> Option<&Matrix> {
        self.by_id.get(&leaf.id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Runs the chain rule from `root` (which must be `1 x 1`) back to the leaves.
pub fn backward(root: &Node) -> Result<Gradients> {
    if root.shape() != (1, 1) {
        let (r, c) = root.shape();
        return Err(Error::Contract(format!(
            "backward needs a 1x1 root, got {r}x{c}"
        )));
    }
    let tape = root.graph.tape.borrow();
    let mut grads: Vec<Option<Matrix>> = vec![None; tape.len()];
    grads[root.id] = Some(Matrix::new(1, 1, vec![1.0])?);

    let mut by_id = HashMap::new();
    for id in (0..=root.id).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &tape[id];
        match &node.op {
            Op::Leaf => {
                by_id.insert(id, g);
            }
            Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&tape[*a].value, &tape[*b].value);
                accumulate(&mut grads[*a], g.matmul(&bv.transpose())?)?;
                accumulate(&mut grads[*b], av.transpose().matmul(&g)?)?;
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[*a], g.clone())?;
                accumulate(&mut grads[*b], g)?;
            }
            Op::AddRow { x, row } => {
                let mut row_grad = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        row_grad.set(0, c, row_grad.get(0, c) + g.get(r, c));
                    }
                }
                accumulate(&mut grads[*x], g)?;
                accumulate(&mut grads[*row], row_grad)?;
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&tape[*a].value, &tape[*b].value);
                accumulate(&mut grads[*a], g.hadamard(bv)?)?;
                accumulate(&mut grads[*b], g.hadamard(av)?)?;
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let gx = Matrix::from_fn(y.rows(), y.cols(), |i, j| {
                    let t = y.get(i, j);
                    g.get(i, j) * (1.0 - t * t)
                })?;
                accumulate(&mut grads[*x], gx)?;
            }
            Op::Relu(x) => {
                let xv = &tape[*x].value;
                let gx = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| {
                    if xv.get(i, j) > 0.0 {
                        g.get(i, j)
                    } else {
                        0.0
                    }
                })?;
                accumulate(&mut grads[*x], gx)?;
            }
            Op::SoftmaxT { x, tau } => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = (0..y.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..y.cols() {
                        gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot) / tau);
                    }
                }
                accumulate(&mut grads[*x], gx)?;
            }
            Op::RowMean(x) => {
                let xv = &tape[*x].value;
                let inv = 1.0 / xv.cols() as f64;
                let gx = Matrix::from_fn(xv.rows(), xv.cols(), |i, _| g.get(i, 0) * inv)?;
                accumulate(&mut grads[*x], gx)?;
            }
            Op::ColMean(x) => {
                let xv = &tape[*x].value;
                let inv = 1.0 / xv.rows() as f64;
                let gx = Matrix::from_fn(xv.rows(), xv.cols(), |_, j| g.get(0, j) * inv)?;
                accumulate(&mut grads[*x], gx)?;
            }
            Op::RowL2(x) => {
                let xv = &tape[*x].value;
                let norms = &node.value;
                let gx = Matrix::from_fn(xv.rows(), xv.cols(), |i, j| {
                    let n = norms.get(i, 0);
                    if n == 0.0 {
                        0.0
                    } else {
                        g.get(i, 0) * xv.get(i, j) / n
                    }
                })?;
                accumulate(&mut grads[*x], gx)?;
            }
            Op::RowNormalize(x) => {
                let xv = &tape[*x].value;
                let y = &node.value;
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let norm = xv.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = (0..xv.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..xv.cols() {
                        gx.set(r, c, (g.get(r, c) - dot * y.get(r, c)) / norm);
                    }
                }
                accumulate(&mut grads[*x], gx)?;
            }
            Op::Scale { x, factor } => {
                accumulate(&mut grads[*x], g.scale(*factor)?)?;
            }
            Op::SquaredError { pred, target } => {
                let pv = &tape[*pred].value;
                let gs = g.get(0, 0) * 2.0 / pv.rows() as f64;
                let gx = Matrix::from_fn(pv.rows(), pv.cols(), |i, j| {
                    gs * (pv.get(i, j) - target.get(i, j))
                })?;
                accumulate(&mut grads[*pred], gx)?;
            }
            Op::CrossEntropy { probs, classes } => {
                let pv = &tape[*probs].value;
                let gs = g.get(0, 0) / pv.rows() as f64;
                let mut gx = Matrix::zeros(pv.rows(), pv.cols());
                for (i, &c) in classes.iter().enumerate() {
                    gx.set(i, c, -gs / pv.get(i, c));
                }
                accumulate(&mut grads[*probs], gx)?;
            }
        }
    }

    // Leaves the sweep never reached get explicit zero gradients.
    for (id, node) in tape.iter().enumerate() {
        if matches!(node.op, Op::Leaf) {
            by_id
                .entry(id)
                .or_insert_with(|| Matrix::zeros(node.value.rows(), node.value.cols()));
        }
    }
    Ok(Gradients { by_id })
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) -> Result<()> {
    match slot {
        Some(m) => *m = m.add(&delta)?,
        None => *slot = Some(delta),
    }
    Ok(())
}
