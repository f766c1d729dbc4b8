//! Aligner and student parameterizations, their forward passes, the
//! orthonormal projection utilities both share, and checkpoint files.
//!
//! The aligner adapts frozen teacher representations: a tanh layer (plus
//! optional extra layers for capacity-matched ablations), a task head, and —
//! unless the heads are dropped — an orthonormal projection into the shared
//! manifold space with its own auxiliary head. The student mirrors the same
//! head structure on top of its own encoder, so the two can be compared in
//! output space and in manifold space.

use std::collections::HashMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Inputs;
use crate::error::{dim_err, Error, Result};
use crate::io_util::{check_magic, Reader};
use crate::rng::stream;
use crate::tensor::{Graph, Matrix, Node};

/// Standard deviation of weight initialization.
pub const INIT_STD: f64 = 0.05;

const CHECKPOINT_MAGIC: &[u8; 4] = b"ARMP";
const CHECKPOINT_VERSION: u32 = 1;

/// Gaussian matrix with the given per-entry standard deviation.
pub fn gaussian_matrix(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::Parameter(format!(
            "init std must be non-negative, got {std}"
        )));
    }
    let dist = Normal::new(0.0, std)
        .map_err(|e| Error::Parameter(format!("bad normal distribution: {e}")))?;
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

/// Matrix with orthonormal columns, from a seeded Gaussian draw followed by
/// Gram-Schmidt. Requires `rows >= cols`.
pub fn orthonormal_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if rows < cols {
        return Err(Error::Parameter(format!(
            "orthonormal columns need rows >= cols, got {rows}x{cols}"
        )));
    }
    let raw = gaussian_matrix(rows, cols, 1.0, rng)?;
    retract_orthonormal(&raw)
}

/// Nearest-by-construction matrix with orthonormal columns, via modified
/// Gram-Schmidt. Already-orthonormal input comes back essentially unchanged,
/// so the retraction is idempotent up to rounding.
pub fn retract_orthonormal(w: &Matrix) -> Result<Matrix> {
    let (rows, cols) = w.shape();
    if rows < cols {
        return Err(Error::Parameter(format!(
            "orthonormal columns need rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut q: Vec<Vec<f64>> = (0..cols).map(|c| w.column(c)).collect();
    for k in 0..cols {
        for j in 0..k {
            let dot: f64 = (0..rows).map(|r| q[j][r] * q[k][r]).sum();
            for r in 0..rows {
                q[k][r] -= dot * q[j][r];
            }
        }
        let norm: f64 = q[k].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Numeric(format!(
                "rank-deficient projection: column {k} has pivot {norm:e}"
            )));
        }
        for r in 0..rows {
            q[k][r] /= norm;
        }
    }
    Matrix::from_fn(rows, cols, |r, c| q[c][r])
}

/// Frobenius norm of `WᵀW - I`; zero for perfectly orthonormal columns.
pub fn ortho_deviation(w: &Matrix) -> f64 {
    let gram = w.transpose().matmul(w).expect("square gram");
    let n = gram.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = gram.get(i, j) - target;
            total += d * d;
        }
    }
    total.sqrt()
}

/// Extra tanh layers needed so that their parameters at least cover the
/// projection (`hidden x manifold`) and auxiliary head (`manifold x classes`
/// plus bias) that a capacity-matched ablation removes.
pub fn capacity_extra_layers(hidden: usize, manifold: usize, classes: usize) -> usize {
    let dropped = hidden * manifold + manifold * classes + classes;
    let per_layer = hidden * hidden + hidden;
    dropped.div_ceil(per_layer).max(1)
}

/// Projection plus auxiliary head shared by the aligner and the student.
#[derive(Clone, Debug)]
pub struct ManifoldHeads {
    /// Orthonormal columns, `width x manifold`.
    pub proj: Matrix,
    pub aux_w: Matrix,
    pub aux_b: Matrix,
}

/// Structural description of an aligner.
#[derive(Clone, Debug)]
pub struct AlignerConfig {
    /// Teacher representation width consumed by the aligner.
    pub d_t: usize,
    pub hidden: usize,
    pub manifold: usize,
    pub classes: usize,
    /// Extra tanh layers after the first (capacity-matched ablations).
    pub extra_layers: usize,
    /// Whether the projection and auxiliary head exist.
    pub with_heads: bool,
}

impl AlignerConfig {
    fn validate(&self) -> Result<()> {
        if self.d_t == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(Error::Parameter(
                "aligner dimensions must be positive".into(),
            ));
        }
        if self.with_heads {
            if self.manifold == 0 {
                return Err(Error::Parameter("manifold width must be positive".into()));
            }
            if self.hidden < self.manifold {
                return Err(Error::Parameter(format!(
                    "projection needs hidden >= manifold, got {} < {}",
                    self.hidden, self.manifold
                )));
            }
        }
        Ok(())
    }
}

/// Trainable aligner parameters.
#[derive(Clone, Debug)]
pub struct AlignerParams {
    pub input_w: Matrix,
    pub input_b: Matrix,
    /// Extra `(weight, bias)` tanh layers, usually empty.
    pub extra: Vec<(Matrix, Matrix)>,
    pub task_w: Matrix,
    pub task_b: Matrix,
    pub heads: Option<ManifoldHeads>,
}

impl AlignerParams {
    /// Seeded initialization: Gaussian weights (std [`INIT_STD`]), zero
    /// biases, orthonormal projection.
    pub fn init(cfg: &AlignerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, "init.aligner");
        let input_w = gaussian_matrix(cfg.d_t, cfg.hidden, INIT_STD, &mut rng)?;
        let input_b = Matrix::zeros(1, cfg.hidden);
        let mut extra = Vec::with_capacity(cfg.extra_layers);
        for _ in 0..cfg.extra_layers {
            extra.push((
                gaussian_matrix(cfg.hidden, cfg.hidden, INIT_STD, &mut rng)?,
                Matrix::zeros(1, cfg.hidden),
            ));
        }
        let task_w = gaussian_matrix(cfg.hidden, cfg.classes, INIT_STD, &mut rng)?;
        let task_b = Matrix::zeros(1, cfg.classes);
        let heads = if cfg.with_heads {
            Some(ManifoldHeads {
                proj: orthonormal_init(cfg.hidden, cfg.manifold, &mut rng)?,
                aux_w: gaussian_matrix(cfg.manifold, cfg.classes, INIT_STD, &mut rng)?,
                aux_b: Matrix::zeros(1, cfg.classes),
            })
        } else {
            None
        };
        Ok(Self {
            input_w,
            input_b,
            extra,
            task_w,
            task_b,
            heads,
        })
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("input_w".into(), &self.input_w),
            ("input_b".into(), &self.input_b),
        ];
        for (i, (w, b)) in self.extra.iter().enumerate() {
            out.push((format!("extra{i}_w"), w));
            out.push((format!("extra{i}_b"), b));
        }
        out.push(("task_w".into(), &self.task_w));
        out.push(("task_b".into(), &self.task_b));
        if let Some(h) = &self.heads {
            out.push(("proj".into(), &h.proj));
            out.push(("aux_w".into(), &h.aux_w));
            out.push(("aux_b".into(), &h.aux_b));
        }
        out
    }

    /// Visits the named tensors mutably, in the order of [`Self::tensors`].
    pub fn for_each_mut(
        &mut self,
        mut f: impl FnMut(&str, &mut Matrix) -> Result<()>,
    ) -> Result<()> {
        f("input_w", &mut self.input_w)?;
        f("input_b", &mut self.input_b)?;
        for (i, (w, b)) in self.extra.iter_mut().enumerate() {
            f(&format!("extra{i}_w"), w)?;
            f(&format!("extra{i}_b"), b)?;
        }
        f("task_w", &mut self.task_w)?;
        f("task_b", &mut self.task_b)?;
        if let Some(h) = &mut self.heads {
            f("proj", &mut h.proj)?;
            f("aux_w", &mut h.aux_w)?;
            f("aux_b", &mut h.aux_b)?;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    /// Re-orthonormalizes the projection (if present) and returns its
    /// deviation afterwards.
    pub fn retract(&mut self) -> Result<f64> {
        match &mut self.heads {
            Some(h) => {
                h.proj = retract_orthonormal(&h.proj)?;
                Ok(ortho_deviation(&h.proj))
            }
            None => Ok(0.0),
        }
    }

    /// Creates one leaf per tensor on `g`.
    pub fn bind(&self, g: &Graph) -> BoundParams {
        BoundParams::new(g, self.tensors())
    }

    pub fn load_from(&mut self, entries: &[(String, Matrix)], prefix: &str) -> Result<()> {
        load_named(entries, prefix, |f| self.for_each_mut(f))
    }
}

/// How the student reads raw examples.
#[derive(Clone, Debug)]
pub enum StudentEncoder {
    /// Linear map from feature vectors: `dim x width` plus bias.
    Vector { w: Matrix, b: Matrix },
    /// Learned embedding table, mean-pooled over the token sequence.
    Token { embedding: Matrix },
}

/// Structural description of a student.
#[derive(Clone, Debug)]
pub struct StudentConfig {
    /// Feature width (vector input) or vocabulary size (token input).
    pub input: StudentInput,
    pub width: usize,
    pub manifold: usize,
    pub classes: usize,
}

#[derive(Clone, Copy, Debug)]
pub enum StudentInput {
    VectorDim(usize),
    TokenVocab(usize),
}

impl StudentConfig {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.manifold == 0 || self.classes == 0 {
            return Err(Error::Parameter(
                "student dimensions must be positive".into(),
            ));
        }
        if self.width < self.manifold {
            return Err(Error::Parameter(format!(
                "projection needs width >= manifold, got {} < {}",
                self.width, self.manifold
            )));
        }
        match self.input {
            StudentInput::VectorDim(0) => {
                Err(Error::Parameter("vector input needs dim >= 1".into()))
            }
            StudentInput::TokenVocab(v) if v < 2 => {
                Err(Error::Parameter("token input needs vocab >= 2".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Trainable student parameters.
#[derive(Clone, Debug)]
pub struct StudentParams {
    pub encoder: StudentEncoder,
    pub hidden_w: Matrix,
    pub hidden_b: Matrix,
    pub task_w: Matrix,
    pub task_b: Matrix,
    pub heads: ManifoldHeads,
}

impl StudentParams {
    pub fn init(cfg: &StudentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, "init.student");
        let encoder = match cfg.input {
            StudentInput::VectorDim(dim) => StudentEncoder::Vector {
                w: gaussian_matrix(dim, cfg.width, INIT_STD, &mut rng)?,
                b: Matrix::zeros(1, cfg.width),
            },
            StudentInput::TokenVocab(vocab) => StudentEncoder::Token {
                embedding: gaussian_matrix(vocab, cfg.width, INIT_STD, &mut rng)?,
            },
        };
        Ok(Self {
            encoder,
            hidden_w: gaussian_matrix(cfg.width, cfg.width, INIT_STD, &mut rng)?,
            hidden_b: Matrix::zeros(1, cfg.width),
            task_w: gaussian_matrix(cfg.width, cfg.classes, INIT_STD, &mut rng)?,
            task_b: Matrix::zeros(1, cfg.classes),
            heads: ManifoldHeads {
                proj: orthonormal_init(cfg.width, cfg.manifold, &mut rng)?,
                aux_w: gaussian_matrix(cfg.manifold, cfg.classes, INIT_STD, &mut rng)?,
                aux_b: Matrix::zeros(1, cfg.classes),
            },
        })
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = match &self.encoder {
            StudentEncoder::Vector { w, b } => {
                vec![("enc_w".into(), w), ("enc_b".into(), b)]
            }
            StudentEncoder::Token { embedding } => vec![("embed".into(), embedding)],
        };
        out.push(("hidden_w".into(), &self.hidden_w));
        out.push(("hidden_b".into(), &self.hidden_b));
        out.push(("task_w".into(), &self.task_w));
        out.push(("task_b".into(), &self.task_b));
        out.push(("proj".into(), &self.heads.proj));
        out.push(("aux_w".into(), &self.heads.aux_w));
        out.push(("aux_b".into(), &self.heads.aux_b));
        out
    }

    pub fn for_each_mut(
        &mut self,
        mut f: impl FnMut(&str, &mut Matrix) -> Result<()>,
    ) -> Result<()> {
        match &mut self.encoder {
            StudentEncoder::Vector { w, b } => {
                f("enc_w", w)?;
                f("enc_b", b)?;
            }
            StudentEncoder::Token { embedding } => f("embed", embedding)?,
        }
        f("hidden_w", &mut self.hidden_w)?;
        f("hidden_b", &mut self.hidden_b)?;
        f("task_w", &mut self.task_w)?;
        f("task_b", &mut self.task_b)?;
        f("proj", &mut self.heads.proj)?;
        f("aux_w", &mut self.heads.aux_w)?;
        f("aux_b", &mut self.heads.aux_b)?;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn retract(&mut self) -> Result<f64> {
        self.heads.proj = retract_orthonormal(&self.heads.proj)?;
        Ok(ortho_deviation(&self.heads.proj))
    }

    pub fn bind(&self, g: &Graph) -> BoundParams {
        BoundParams::new(g, self.tensors())
    }

    pub fn load_from(&mut self, entries: &[(String, Matrix)], prefix: &str) -> Result<()> {
        load_named(entries, prefix, |f| self.for_each_mut(f))
    }
}

/// Graph leaves for one parameter set, in canonical tensor order.
pub struct BoundParams {
    named: Vec<(String, Node)>,
    by_name: HashMap<String, usize>,
}

impl BoundParams {
    fn new(g: &Graph, tensors: Vec<(String, &Matrix)>) -> Self {
        let named: Vec<(String, Node)> = tensors
            .into_iter()
            .map(|(name, m)| (name, g.leaf(m.clone())))
            .collect();
        let by_name = named
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        Self { named, by_name }
    }

    pub fn node(&self, name: &str) -> &Node {
        let i = self.by_name[name];
        &self.named[i].1
    }

    fn maybe(&self, name: &str) -> Option<&Node> {
        self.by_name.get(name).map(|&i| &self.named[i].1)
    }

    pub fn named(&self) -> &[(String, Node)] {
        &self.named
    }
}

/// Everything a forward pass exposes to the losses. `projection` and
/// `aux_logits` are absent only when the heads were dropped.
#[derive(Debug)]
pub struct ForwardOutputs {
    pub hidden: Node,
    pub logits: Node,
    pub projection: Option<Node>,
    pub aux_logits: Option<Node>,
}

/// Detached (constant) copy of forward outputs, for feeding one model's
/// outputs into another model's graph without gradient flow.
#[derive(Clone, Debug)]
pub struct DetachedOutputs {
    pub logits: Matrix,
    pub projection: Option<Matrix>,
    pub aux_logits: Option<Matrix>,
}

impl ForwardOutputs {
    pub fn batch_size(&self) -> usize {
        self.logits.shape().0
    }

    pub fn detach(&self) -> DetachedOutputs {
        DetachedOutputs {
            logits: self.logits.value(),
            projection: self.projection.as_ref().map(Node::value),
            aux_logits: self.aux_logits.as_ref().map(Node::value),
        }
    }
}

/// Runs the aligner on a batch of teacher representations.
pub fn aligner_forward(g: &Graph, bound: &BoundParams, reps: &Matrix) -> Result<ForwardOutputs> {
    let input_w = bound.node("input_w");
    if reps.cols() != input_w.shape().0 {
        return Err(dim_err("aligner_forward", reps.shape(), input_w.shape()));
    }
    let x = g.constant(reps.clone());
    let mut hidden = x.matmul(input_w)?.add_row(bound.node("input_b"))?.tanh()?;
    for i in 0.. {
        let Some(w) = bound.maybe(&format!("extra{i}_w")) else { break };
        hidden = hidden
            .matmul(w)?
            .add_row(bound.node(&format!("extra{i}_b")))?
            .tanh()?;
    }
    finish_heads(bound, hidden)
}

/// Runs the student on a batch of raw inputs.
pub fn student_forward(g: &Graph, bound: &BoundParams, inputs: &Inputs) -> Result<ForwardOutputs> {
    let encoded = match inputs {
        Inputs::Vectors(x) => {
            let w = bound.maybe("enc_w").ok_or_else(|| {
                Error::Contract("vector inputs fed to a token-encoder student".into())
            })?;
            if x.cols() != w.shape().0 {
                return Err(dim_err("student_forward", x.shape(), w.shape()));
            }
            g.constant(x.clone()).matmul(w)?.add_row(bound.node("enc_b"))?
        }
        Inputs::Tokens(seqs) => {
            let embedding = bound.maybe("embed").ok_or_else(|| {
                Error::Contract("token inputs fed to a vector-encoder student".into())
            })?;
            let vocab = embedding.shape().0;
            let pool = pooling_matrix(seqs, vocab)?;
            g.constant(pool).matmul(embedding)?
        }
    };
    let hidden = encoded
        .matmul(bound.node("hidden_w"))?
        .add_row(bound.node("hidden_b"))?
        .tanh()?;
    finish_heads(bound, hidden)
}

fn finish_heads(bound: &BoundParams, hidden: Node) -> Result<ForwardOutputs> {
    let logits = hidden
        .matmul(bound.node("task_w"))?
        .add_row(bound.node("task_b"))?;
    let (projection, aux_logits) = match bound.maybe("proj") {
        Some(proj) => {
            let p = hidden.matmul(proj)?;
            let aux = p
                .matmul(bound.node("aux_w"))?
                .add_row(bound.node("aux_b"))?;
            (Some(p), Some(aux))
        }
        None => (None, None),
    };
    Ok(ForwardOutputs {
        hidden,
        logits,
        projection,
        aux_logits,
    })
}

/// Mean-pooling weights: row `i` holds `count(token) / len(seq_i)` per
/// vocabulary entry, so `pool.matmul(embedding)` is the mean embedding row.
fn pooling_matrix(seqs: &[Vec<usize>], vocab: usize) -> Result<Matrix> {
    if seqs.is_empty() {
        return Err(Error::Data("empty token batch".into()));
    }
    let mut pool = Matrix::zeros(seqs.len(), vocab);
    for (i, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::Data(format!("empty token sequence at example {i}")));
        }
        let w = 1.0 / seq.len() as f64;
        for &t in seq {
            if t >= vocab {
                return Err(Error::Data(format!(
                    "token id {t} out of range for vocabulary {vocab} at example {i}"
                )));
            }
            pool.set(i, t, pool.get(i, t) + w);
        }
    }
    Ok(pool)
}

fn load_named(
    entries: &[(String, Matrix)],
    prefix: &str,
    visit: impl FnOnce(&mut dyn FnMut(&str, &mut Matrix) -> Result<()>) -> Result<()>,
) -> Result<()> {
    let mut by_name: HashMap<&str, &Matrix> = HashMap::new();
    for (name, m) in entries.iter().filter(|(n, _)| n.starts_with(prefix)) {
        if by_name.insert(name.as_str(), m).is_some() {
            return Err(Error::Format(format!("duplicate tensor '{name}'")));
        }
    }
    visit(&mut |name: &str, slot: &mut Matrix| {
        let full = format!("{prefix}{name}");
        let found = by_name
            .remove(full.as_str())
            .ok_or_else(|| Error::Format(format!("missing tensor '{full}'")))?;
        if found.shape() != slot.shape() {
            return Err(dim_err("checkpoint tensor", slot.shape(), found.shape()));
        }
        *slot = found.clone();
        Ok(())
    })?;
    if let Some(name) = by_name.keys().next() {
        return Err(Error::Format(format!("unexpected tensor '{name}'")));
    }
    Ok(())
}

/// Writes named tensors: magic `ARMP`, version, then per tensor a u16
/// name length, the UTF-8 name, u32 rows, u32 cols, and row-major f64
/// little-endian data.
pub fn write_checkpoint<P: AsRef<Path>>(path: P, tensors: &[(String, &Matrix)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, m) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::Parameter(format!("tensor name too long: {name}")));
        }
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a checkpoint written by [`write_checkpoint`], in file order.
pub fn read_checkpoint<P: AsRef<Path>>(path: P) -> Result<Vec<(String, Matrix)>> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    check_magic(&mut r, CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let mut out = Vec::new();
    while !r.is_done() {
        let name_len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8(r.bytes(name_len, "tensor name")?.to_vec())
            .map_err(|e| Error::Format(format!("tensor name is not UTF-8: {e}")))?;
        let rows = r.u32("tensor rows")? as usize;
        let cols = r.u32("tensor cols")? as usize;
        let data = r.f64_vec(rows * cols, &format!("data of tensor '{name}'"))?;
        out.push((name, Matrix::new(rows, cols, data)?));
    }
    Ok(out)
}

/// Saves an aligner/student pair under `aligner.` / `student.` prefixes.
pub fn save_models<P: AsRef<Path>>(
    path: P,
    aligner: Option<&AlignerParams>,
    student: &StudentParams,
) -> Result<()> {
    let mut tensors = Vec::new();
    if let Some(a) = aligner {
        for (name, m) in a.tensors() {
            tensors.push((format!("aligner.{name}"), m));
        }
    }
    for (name, m) in student.tensors() {
        tensors.push((format!("student.{name}"), m));
    }
    write_checkpoint(path, &tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_aligner() -> AlignerParams {
        AlignerParams {
            input_w: Matrix::new(2, 2, vec![0.5, -0.25, 0.1, 0.3]).unwrap(),
            input_b: Matrix::new(1, 2, vec![0.05, -0.1]).unwrap(),
            extra: vec![],
            task_w: Matrix::new(2, 2, vec![1.0, -1.0, 2.0, 0.5]).unwrap(),
            task_b: Matrix::new(1, 2, vec![0.1, 0.2]).unwrap(),
            heads: Some(ManifoldHeads {
                proj: Matrix::new(2, 1, vec![0.6, 0.8]).unwrap(),
                aux_w: Matrix::new(1, 2, vec![0.3, -0.2]).unwrap(),
                aux_b: Matrix::new(1, 2, vec![0.0, 0.1]).unwrap(),
            }),
        }
    }

    #[test]
    fn aligner_forward_matches_hand_arithmetic() {
        let params = small_aligner();
        let g = Graph::new();
        let bound = params.bind(&g);
        let reps = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let out = aligner_forward(&g, &bound, &reps).unwrap();

        let h0 = (1.0f64 * 0.5 + 2.0 * 0.1 + 0.05).tanh();
        let h1 = (1.0f64 * -0.25 + 2.0 * 0.3 - 0.1).tanh();
        let hidden = out.hidden.value();
        assert_relative_eq!(hidden.get(0, 0), h0, max_relative = 1e-12);
        assert_relative_eq!(hidden.get(0, 1), h1, max_relative = 1e-12);

        let logits = out.logits.value();
        assert_relative_eq!(logits.get(0, 0), h0 + 2.0 * h1 + 0.1, max_relative = 1e-12);
        assert_relative_eq!(logits.get(0, 1), -h0 + 0.5 * h1 + 0.2, max_relative = 1e-12);

        let p = h0 * 0.6 + h1 * 0.8;
        assert_relative_eq!(
            out.projection.as_ref().unwrap().value().get(0, 0),
            p,
            max_relative = 1e-12
        );
        let aux = out.aux_logits.as_ref().unwrap().value();
        assert_relative_eq!(aux.get(0, 0), p * 0.3, max_relative = 1e-12);
        assert_relative_eq!(aux.get(0, 1), p * -0.2 + 0.1, max_relative = 1e-12);
    }

    #[test]
    fn aligner_forward_rejects_width_mismatch() {
        let params = small_aligner();
        let g = Graph::new();
        let bound = params.bind(&g);
        let reps = Matrix::zeros(1, 3);
        assert!(matches!(
            aligner_forward(&g, &bound, &reps),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn forward_is_pure() {
        let cfg = AlignerConfig {
            d_t: 6,
            hidden: 5,
            manifold: 3,
            classes: 2,
            extra_layers: 1,
            with_heads: true,
        };
        let params = AlignerParams::init(&cfg, 3).unwrap();
        let mut rng = stream(9, "test.reps");
        let reps = gaussian_matrix(4, 6, 1.0, &mut rng).unwrap();
        let run = || {
            let g = Graph::new();
            let out = aligner_forward(&g, &params.bind(&g), &reps).unwrap();
            (out.logits.value(), out.projection.unwrap().value())
        };
        let (l1, p1) = run();
        let (l2, p2) = run();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn student_single_token_is_tanh_of_embedding_row() {
        let cfg = StudentConfig {
            input: StudentInput::TokenVocab(5),
            width: 3,
            manifold: 2,
            classes: 2,
        };
        let params = StudentParams::init(&cfg, 4).unwrap();
        let g = Graph::new();
        let bound = params.bind(&g);
        let out =
            student_forward(&g, &bound, &Inputs::Tokens(vec![vec![2]])).unwrap();
        let embedding = match &params.encoder {
            StudentEncoder::Token { embedding } => embedding,
            _ => unreachable!(),
        };
        let enc = Matrix::new(1, 3, embedding.row(2).to_vec()).unwrap();
        let expect = enc
            .matmul(&params.hidden_w)
            .unwrap()
            .add(&params.hidden_b)
            .unwrap();
        let hidden = out.hidden.value();
        for c in 0..3 {
            assert_relative_eq!(
                hidden.get(0, c),
                expect.get(0, c).tanh(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn token_order_does_not_matter() {
        let cfg = StudentConfig {
            input: StudentInput::TokenVocab(7),
            width: 4,
            manifold: 2,
            classes: 2,
        };
        let params = StudentParams::init(&cfg, 5).unwrap();
        let run = |seq: Vec<usize>| {
            let g = Graph::new();
            let out = student_forward(&g, &params.bind(&g), &Inputs::Tokens(vec![seq])).unwrap();
            out.logits.value()
        };
        assert_eq!(run(vec![1, 4, 1, 6]), run(vec![6, 1, 1, 4]));
    }

    #[test]
    fn student_rejects_bad_token_input() {
        let cfg = StudentConfig {
            input: StudentInput::TokenVocab(5),
            width: 3,
            manifold: 2,
            classes: 2,
        };
        let params = StudentParams::init(&cfg, 4).unwrap();
        let g = Graph::new();
        let bound = params.bind(&g);
        let err =
            student_forward(&g, &bound, &Inputs::Tokens(vec![vec![0], vec![]])).unwrap_err();
        assert!(err.to_string().contains("example 1"), "{err}");
        let err =
            student_forward(&g, &bound, &Inputs::Tokens(vec![vec![9]])).unwrap_err();
        assert!(err.to_string().contains("token id 9"), "{err}");
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let cfg = AlignerConfig {
            d_t: 8,
            hidden: 6,
            manifold: 4,
            classes: 2,
            extra_layers: 0,
            with_heads: true,
        };
        let a = AlignerParams::init(&cfg, 42).unwrap();
        let b = AlignerParams::init(&cfg, 42).unwrap();
        let c = AlignerParams::init(&cfg, 43).unwrap();
        assert_eq!(a.input_w, b.input_w);
        assert_eq!(
            a.heads.as_ref().unwrap().proj,
            b.heads.as_ref().unwrap().proj
        );
        assert_ne!(a.input_w, c.input_w);
    }

    #[test]
    fn orthonormal_init_is_orthonormal() {
        let mut rng = stream(1, "test.ortho");
        let w = orthonormal_init(8, 3, &mut rng).unwrap();
        assert!(ortho_deviation(&w) < 1e-10);
        assert!(orthonormal_init(3, 8, &mut rng).is_err());
    }

    #[test]
    fn retraction_normalizes_and_is_idempotent() {
        let two_i = Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let q = retract_orthonormal(&two_i).unwrap();
        assert_eq!(q, Matrix::identity(2));

        let mut rng = stream(2, "test.retract");
        let w = gaussian_matrix(6, 4, 1.0, &mut rng).unwrap();
        let q1 = retract_orthonormal(&w).unwrap();
        let q2 = retract_orthonormal(&q1).unwrap();
        assert!(q1.max_abs_diff(&q2).unwrap() < 1e-10);
    }

    #[test]
    fn retraction_rejects_rank_deficiency() {
        let w = Matrix::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            retract_orthonormal(&w),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn capacity_layers_cover_dropped_parameters() {
        assert_eq!(capacity_extra_layers(32, 16, 2), 1);
        let k = capacity_extra_layers(2, 2, 2);
        assert_eq!(k, 2);
        assert!(k * (2 * 2 + 2) >= 2 * 2 + 2 * 2 + 2);
    }

    #[test]
    fn bound_names_match_tensor_order() {
        let cfg = StudentConfig {
            input: StudentInput::VectorDim(3),
            width: 4,
            manifold: 2,
            classes: 2,
        };
        let params = StudentParams::init(&cfg, 6).unwrap();
        let g = Graph::new();
        let bound = params.bind(&g);
        let tensor_names: Vec<String> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
        let bound_names: Vec<String> = bound.named().iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(tensor_names, bound_names);
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.armp");
        let a_cfg = AlignerConfig {
            d_t: 5,
            hidden: 4,
            manifold: 2,
            classes: 2,
            extra_layers: 1,
            with_heads: true,
        };
        let s_cfg = StudentConfig {
            input: StudentInput::VectorDim(3),
            width: 4,
            manifold: 2,
            classes: 2,
        };
        let aligner = AlignerParams::init(&a_cfg, 10).unwrap();
        let student = StudentParams::init(&s_cfg, 11).unwrap();
        save_models(&path, Some(&aligner), &student).unwrap();

        let entries = read_checkpoint(&path).unwrap();
        let mut aligner2 = AlignerParams::init(&a_cfg, 99).unwrap();
        let mut student2 = StudentParams::init(&s_cfg, 98).unwrap();
        aligner2.load_from(&entries, "aligner.").unwrap();
        student2.load_from(&entries, "student.").unwrap();

        for ((_, a), (_, b)) in aligner.tensors().iter().zip(aligner2.tensors()) {
            assert_eq!(a.data(), b.data());
        }
        for ((_, a), (_, b)) in student.tensors().iter().zip(student2.tensors()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn checkpoint_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.armp");
        std::fs::write(&path, b"NOPE").unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let m = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let good = dir.path().join("good.armp");
        write_checkpoint(&good, &[("w".into(), &m)]).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let cut = dir.path().join("cut.armp");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        let err = read_checkpoint(&cut).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected") && msg.contains("found"), "{msg}");
    }

    #[test]
    fn load_rejects_missing_and_mismatched_tensors() {
        let s_cfg = StudentConfig {
            input: StudentInput::VectorDim(3),
            width: 4,
            manifold: 2,
            classes: 2,
        };
        let student = StudentParams::init(&s_cfg, 1).unwrap();
        let mut entries: Vec<(String, Matrix)> = student
            .tensors()
            .into_iter()
            .map(|(n, m)| (format!("student.{n}"), m.clone()))
            .collect();
        entries.pop();
        let mut target = StudentParams::init(&s_cfg, 2).unwrap();
        assert!(matches!(
            target.load_from(&entries, "student."),
            Err(Error::Format(_))
        ));
    }
}
