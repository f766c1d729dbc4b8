//! Synthetic desk-scale tasks: balanced Gaussian-blob classification and
//! linear-target regression, with either direct feature vectors or token
//! sequences as student input.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Matrix;

/// Prediction target of a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TaskKind {
    Classification,
    Regression,
}

/// What the student consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// Direct feature vectors of the given width.
    Vector { dim: usize },
    /// Token-id sequences over a vocabulary of the given size.
    Token { vocab: usize, seq_len: usize },
}

/// Per-example targets. The variant must match the task kind.
#[derive(Clone, Debug)]
pub enum Labels {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(v) => v.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> Result<&[usize]> {
        match self {
            Labels::Classes(v) => Ok(v),
            Labels::Values(_) => Err(Error::Data(
                "expected class labels, found regression targets".into(),
            )),
        }
    }

    pub fn values(&self) -> Result<&[f64]> {
        match self {
            Labels::Values(v) => Ok(v),
            Labels::Classes(_) => Err(Error::Data(
                "expected regression targets, found class labels".into(),
            )),
        }
    }

    fn gather(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Classes(v) => Labels::Classes(indices.iter().map(|&i| v[i]).collect()),
            Labels::Values(v) => Labels::Values(indices.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Model inputs for a set of examples.
#[derive(Clone, Debug)]
pub enum Inputs {
    /// One feature row per example.
    Vectors(Matrix),
    /// One token-id sequence per example.
    Tokens(Vec<Vec<usize>>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Vectors(m) => m.rows(),
            Inputs::Tokens(seqs) => seqs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A set of examples plus targets.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub inputs: Inputs,
    pub labels: Labels,
    /// Vocabulary size for token inputs; 0 for vector inputs.
    pub vocab: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct prediction outputs (classes, or 1 for regression).
    pub fn output_width(&self) -> usize {
        match &self.labels {
            Labels::Classes(v) => v.iter().copied().max().map_or(1, |m| m + 1),
            Labels::Values(_) => 1,
        }
    }

    pub fn gather(&self, indices: &[usize]) -> Result<Dataset> {
        let inputs = match &self.inputs {
            Inputs::Vectors(m) => Inputs::Vectors(m.gather_rows(indices)?),
            Inputs::Tokens(seqs) => {
                let mut out = Vec::with_capacity(indices.len());
                for &i in indices {
                    if i >= seqs.len() {
                        return Err(Error::Parameter(format!(
                            "example index {i} out of bounds for {} examples",
                            seqs.len()
                        )));
                    }
                    out.push(seqs[i].clone());
                }
                Inputs::Tokens(out)
            }
        };
        Ok(Dataset {
            inputs,
            labels: self.labels.gather(indices),
            vocab: self.vocab,
        })
    }

    /// Fixed-width feature view of the inputs: the feature rows themselves in
    /// vector mode, normalized token histograms in token mode. This is what
    /// the synthetic teacher reads.
    pub fn feature_rows(&self) -> Result<Matrix> {
        match &self.inputs {
            Inputs::Vectors(m) => Ok(m.clone()),
            Inputs::Tokens(seqs) => {
                if self.vocab == 0 {
                    return Err(Error::Data("token dataset with zero vocabulary".into()));
                }
                let mut rows = Matrix::zeros(seqs.len(), self.vocab);
                for (i, seq) in seqs.iter().enumerate() {
                    if seq.is_empty() {
                        return Err(Error::Data(format!("empty token sequence at example {i}")));
                    }
                    let w = 1.0 / seq.len() as f64;
                    for &t in seq {
                        if t >= self.vocab {
                            return Err(Error::Data(format!(
                                "token id {t} out of range for vocabulary {} at example {i}",
                                self.vocab
                            )));
                        }
                        rows.set(i, t, rows.get(i, t) + w);
                    }
                }
                Ok(rows)
            }
        }
    }
}

/// Recipe for one synthetic task.
#[derive(Clone, Debug)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub mode: InputMode,
    /// Class count for classification; ignored for regression.
    pub classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Scale of the class-mean offsets (or of the regression weights).
    pub separation: f64,
    /// Within-class feature spread.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::Classification,
            mode: InputMode::Vector { dim: 8 },
            classes: 2,
            n_train: 256,
            n_test: 512,
            separation: 1.0,
            noise: 2.0,
            seed: 11,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Parameter(
                "task needs at least one train and one test example".into(),
            ));
        }
        if self.kind == TaskKind::Classification && self.classes < 2 {
            return Err(Error::Parameter(format!(
                "classification needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Parameter(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        match self.mode {
            InputMode::Vector { dim } => {
                if dim == 0 {
                    return Err(Error::Parameter("vector inputs need dim >= 1".into()));
                }
            }
            InputMode::Token { vocab, seq_len } => {
                if vocab < 2 || seq_len == 0 {
                    return Err(Error::Parameter(format!(
                        "token inputs need vocab >= 2 and seq_len >= 1, got vocab {vocab}, seq_len {seq_len}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Width of [`Dataset::feature_rows`] for this config.
    pub fn feature_dim(&self) -> usize {
        match self.mode {
            InputMode::Vector { dim } => dim,
            InputMode::Token { vocab, .. } => vocab,
        }
    }
}

/// Train and test splits generated from one [`TaskConfig`].
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub train: Dataset,
    pub test: Dataset,
}

/// Generates a task deterministically from its config.
pub fn generate_task(cfg: &TaskConfig) -> Result<SyntheticTask> {
    cfg.validate()?;
    match cfg.kind {
        TaskKind::Classification => generate_classification(cfg),
        TaskKind::Regression => generate_regression(cfg),
    }
}

fn generate_classification(cfg: &TaskConfig) -> Result<SyntheticTask> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    match cfg.mode {
        InputMode::Vector { dim } => {
            let mut means_rng = stream(cfg.seed, "task.means");
            let means: Vec<Vec<f64>> = (0..cfg.classes)
                .map(|_| {
                    (0..dim)
                        .map(|_| cfg.separation * unit.sample(&mut means_rng))
                        .collect()
                })
                .collect();
            let split = |n: usize, tag: &str| -> Result<Dataset> {
                let mut rng = stream(cfg.seed, tag);
                let labels: Vec<usize> = (0..n).map(|i| i % cfg.classes).collect();
                let mut data = Vec::with_capacity(n * dim);
                for &y in &labels {
                    for d in 0..dim {
                        data.push(means[y][d] + cfg.noise * unit.sample(&mut rng));
                    }
                }
                Ok(Dataset {
                    inputs: Inputs::Vectors(Matrix::new(n, dim, data)?),
                    labels: Labels::Classes(labels),
                    vocab: 0,
                })
            };
            Ok(SyntheticTask {
                train: split(cfg.n_train, "task.train")?,
                test: split(cfg.n_test, "task.test")?,
            })
        }
        InputMode::Token { vocab, seq_len } => {
            // Each class prefers its own band of token ids; `noise` moves
            // probability mass from the band to the whole vocabulary.
            let band = vocab / cfg.classes.min(vocab);
            let leak = (cfg.noise / (cfg.noise + cfg.separation + 1e-12)).clamp(0.0, 1.0);
            let split = |n: usize, tag: &str| -> Dataset {
                let mut rng = stream(cfg.seed, tag);
                let labels: Vec<usize> = (0..n).map(|i| i % cfg.classes).collect();
                let seqs: Vec<Vec<usize>> = labels
                    .iter()
                    .map(|&y| {
                        (0..seq_len)
                            .map(|_| {
                                if rng.random::<f64>() < leak || band == 0 {
                                    rng.random_range(0..vocab)
                                } else {
                                    let lo = (y * band).min(vocab - 1);
                                    let hi = (lo + band).min(vocab);
                                    rng.random_range(lo..hi)
                                }
                            })
                            .collect()
                    })
                    .collect();
                Dataset {
                    inputs: Inputs::Tokens(seqs),
                    labels: Labels::Classes(labels),
                    vocab,
                }
            };
            Ok(SyntheticTask {
                train: split(cfg.n_train, "task.train"),
                test: split(cfg.n_test, "task.test"),
            })
        }
    }
}

fn generate_regression(cfg: &TaskConfig) -> Result<SyntheticTask> {
    let dim = match cfg.mode {
        InputMode::Vector { dim } => dim,
        InputMode::Token { .. } => {
            return Err(Error::Parameter(
                "regression tasks use vector inputs".into(),
            ));
        }
    };
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut w_rng = stream(cfg.seed, "task.weights");
    let w: Vec<f64> = (0..dim)
        .map(|_| cfg.separation * unit.sample(&mut w_rng))
        .collect();
    let scale = 1.0 / (dim as f64).sqrt();
    let split = |n: usize, tag: &str| -> Result<Dataset> {
        let mut rng = stream(cfg.seed, tag);
        let mut data = Vec::with_capacity(n * dim);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
            let y: f64 =
                x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * scale + cfg.noise * unit.sample(&mut rng);
            data.extend_from_slice(&x);
            targets.push(y);
        }
        Ok(Dataset {
            inputs: Inputs::Vectors(Matrix::new(n, dim, data)?),
            labels: Labels::Values(targets),
            vocab: 0,
        })
    };
    Ok(SyntheticTask {
        train: split(cfg.n_train, "task.train")?,
        test: split(cfg.n_test, "task.test")?,
    })
}

/// Seeded permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
