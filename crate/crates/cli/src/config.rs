//! Experiment configuration: a flat key-value text file with dotted section
//! keys, parsed into a [`RunSpec`] plus sweep grids and audit settings.
//!
//! Every key has a default, so an empty (or absent) file is a complete
//! configuration: the reference synthetic task, the reference teacher and
//! training hyperparameters, and the canonical sweep grids. Parse errors
//! carry the line number and the offending key so a bad file points straight
//! at the field that needs fixing.

use std::path::PathBuf;
use std::str::FromStr;

use armada_core::experiments::{RepTransform, RunSpec};
use armada_core::{InputMode, ManifoldVariant, Metric, TaskKind};

/// Configuration failure with enough context to fix the file.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Which seeds change between replicated runs of a sweep point.
///
/// `Train` keeps the dataset and teacher fixed and re-seeds only the
/// training-side randomness (initialization, batch order, transform draw),
/// so run-to-run spread reflects training variance on one dataset. `Full`
/// re-seeds everything, so spread also includes data resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reseed {
    Train,
    Full,
}

impl FromStr for Reseed {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Reseed::Train),
            "full" => Ok(Reseed::Full),
            other => Err(ConfigError(format!(
                "unknown reseed mode '{other}' (expected train or full)"
            ))),
        }
    }
}

/// Grids for the sweep-style subcommands. Lists are comma-separated in the
/// file; the defaults reproduce the canonical ablation grid.
#[derive(Clone, Debug)]
pub struct SweepGrids {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub variants: Vec<ManifoldVariant>,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub reseed: Reseed,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            alpha: vec![0.0, 0.5],
            beta: vec![0.0, 1.0],
            gamma: vec![0.0, 1.0],
            variants: vec![
                ManifoldVariant::Cosine,
                ManifoldVariant::Euclid,
                ManifoldVariant::Elementwise,
            ],
            sigmas: vec![0.0, 1.0, 2.0, 5.0],
            seeds: vec![1, 2, 3, 4, 5],
            reseed: Reseed::Train,
        }
    }
}

/// Settings for the verification subcommands.
#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub seed: u64,
    /// Random instances per audited loss composition.
    pub instances: usize,
    /// Relative-error tolerance for the gradient audit.
    pub tol: f64,
    /// Batch pairs for the manifold-ordering audit.
    pub pairs: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            instances: 20,
            tol: 1e-4,
            pairs: 1000,
        }
    }
}

/// Everything a subcommand needs: the run recipe, optional representation
/// files that replace the synthetic teacher, sweep grids, and audit knobs.
#[derive(Clone, Debug, Default)]
pub struct ExperimentConfig {
    pub spec: RunSpec,
    /// Load training-split representations from this file instead of
    /// synthesizing them (requires `test_reps` too).
    pub train_reps: Option<PathBuf>,
    pub test_reps: Option<PathBuf>,
    pub sweep: SweepGrids,
    pub audit: AuditConfig,
}

impl ExperimentConfig {
    /// Parses the file contents. `origin` names the source in messages
    /// (a path, or "<defaults>" for the empty config).
    pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        // The transform is assembled from two keys after all lines are read.
        let mut transform_kind = TransformKind::Clean;
        let mut transform_sigma = 1.0;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            // Everything after '#' is a comment, so values cannot contain it.
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!(
                    "{origin}:{line_no}: expected 'key = value', got '{line}'"
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.assign(key, value, &mut transform_kind, &mut transform_sigma)
                .map_err(|e| ConfigError(format!("{origin}:{line_no}: {key}: {}", e.0)))?;
        }

        cfg.spec.transform = match transform_kind {
            TransformKind::Clean => RepTransform::Clean,
            TransformKind::Noise => RepTransform::Noise(transform_sigma),
            TransformKind::Shuffle => RepTransform::Shuffle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn assign(
        &mut self,
        key: &str,
        value: &str,
        transform_kind: &mut TransformKind,
        transform_sigma: &mut f64,
    ) -> Result<()> {
        let spec = &mut self.spec;
        match key {
            "task.kind" => {
                spec.task.kind = parse_task_kind(value)?;
                spec.train.loss.task = spec.task.kind;
            }
            "task.dim" => spec.task.mode = InputMode::Vector { dim: parse(value)? },
            "task.vocab" => {
                let (_, seq_len) = token_mode(&spec.task.mode);
                spec.task.mode = InputMode::Token {
                    vocab: parse(value)?,
                    seq_len,
                };
            }
            "task.seq_len" => {
                let (vocab, _) = token_mode(&spec.task.mode);
                spec.task.mode = InputMode::Token {
                    vocab,
                    seq_len: parse(value)?,
                };
            }
            "task.classes" => spec.task.classes = parse(value)?,
            "task.n_train" => spec.task.n_train = parse(value)?,
            "task.n_test" => spec.task.n_test = parse(value)?,
            "task.separation" => spec.task.separation = parse(value)?,
            "task.noise" => spec.task.noise = parse(value)?,
            "task.seed" => spec.task.seed = parse(value)?,

            "teacher.d_t" => spec.teacher.d_t = parse(value)?,
            "teacher.rho" => spec.teacher.rho = parse(value)?,
            "teacher.anchor_scale" => spec.teacher.anchor_scale = parse(value)?,
            "teacher.rep_noise" => spec.teacher.rep_noise = parse(value)?,
            "teacher.seed" => spec.teacher.seed = parse(value)?,
            "teacher.train_reps" => self.train_reps = Some(PathBuf::from(value)),
            "teacher.test_reps" => self.test_reps = Some(PathBuf::from(value)),

            "train.hidden" => spec.train.hidden = parse(value)?,
            "train.width" => spec.train.width = parse(value)?,
            "train.manifold" => spec.train.manifold = parse(value)?,
            "train.epochs" => spec.train.epochs = parse(value)?,
            "train.batch_size" => spec.train.batch_size = parse(value)?,
            "train.aligner_lr" => spec.train.aligner_lr = parse(value)?,
            "train.student_lr" => spec.train.student_lr = parse(value)?,
            "train.weight_decay" => spec.train.weight_decay = parse(value)?,
            "train.eval_every" => spec.train.eval_every = parse(value)?,
            "train.seed" => spec.train.seed = parse(value)?,
            "train.metric" => {
                spec.train.metric = Metric::from_str(value).map_err(stringify)?;
            }
            "train.frozen_aligner" => spec.train.frozen_aligner = parse_bool(value)?,
            "train.capacity_ablation" => spec.train.capacity_ablation = parse_bool(value)?,

            "loss.alpha" => spec.train.loss.alpha = parse(value)?,
            "loss.beta" => spec.train.loss.beta = parse(value)?,
            "loss.gamma" => spec.train.loss.gamma = parse(value)?,
            "loss.tau" => spec.train.loss.tau = parse(value)?,
            "loss.variant" => {
                spec.train.loss.variant = ManifoldVariant::from_str(value).map_err(stringify)?;
            }
            "loss.normalize_cosine" => spec.train.loss.normalize_cosine = parse_bool(value)?,
            "loss.aux_logit_match" => spec.train.loss.aux_logit_match = parse_bool(value)?,

            "transform.kind" => *transform_kind = parse_transform_kind(value)?,
            "transform.sigma" => *transform_sigma = parse(value)?,
            "transform.seed" => spec.transform_seed = parse(value)?,

            "sweep.alpha" => self.sweep.alpha = parse_list(value)?,
            "sweep.beta" => self.sweep.beta = parse_list(value)?,
            "sweep.gamma" => self.sweep.gamma = parse_list(value)?,
            "sweep.variants" => {
                self.sweep.variants = split_list(value)?
                    .iter()
                    .map(|v| ManifoldVariant::from_str(v).map_err(stringify))
                    .collect::<Result<_>>()?;
            }
            "sweep.sigmas" => self.sweep.sigmas = parse_list(value)?,
            "sweep.seeds" => self.sweep.seeds = parse_list(value)?,
            "sweep.reseed" => self.sweep.reseed = value.parse()?,

            "audit.seed" => self.audit.seed = parse(value)?,
            "audit.instances" => self.audit.instances = parse(value)?,
            "audit.tol" => self.audit.tol = parse(value)?,
            "audit.pairs" => self.audit.pairs = parse(value)?,

            other => {
                return Err(ConfigError(format!(
                    "unknown key '{other}' (sections: task, teacher, train, loss, transform, sweep, audit)"
                )))
            }
        }
        Ok(())
    }

    /// Cross-field checks that cannot run while individual lines are being
    /// assigned.
    fn validate(&self) -> Result<()> {
        let field = |name: &str, e: armada_core::Error| ConfigError(format!("{name}: {e}"));
        self.spec.task.validate().map_err(|e| field("task", e))?;
        self.spec.teacher.validate().map_err(|e| field("teacher", e))?;
        self.spec.train.validate().map_err(|e| field("train", e))?;
        if let RepTransform::Noise(sigma) = self.spec.transform {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(ConfigError(format!(
                    "transform.sigma: must be a non-negative number, got {sigma}"
                )));
            }
        }
        if self.train_reps.is_some() != self.test_reps.is_some() {
            return Err(ConfigError(
                "teacher.train_reps and teacher.test_reps must be given together".into(),
            ));
        }
        for (name, grid) in [
            ("sweep.alpha", self.sweep.alpha.len()),
            ("sweep.beta", self.sweep.beta.len()),
            ("sweep.gamma", self.sweep.gamma.len()),
            ("sweep.variants", self.sweep.variants.len()),
            ("sweep.sigmas", self.sweep.sigmas.len()),
            ("sweep.seeds", self.sweep.seeds.len()),
        ] {
            if grid == 0 {
                return Err(ConfigError(format!("{name}: grid must not be empty")));
            }
        }
        for sigma in &self.sweep.sigmas {
            if !(sigma.is_finite() && *sigma >= 0.0) {
                return Err(ConfigError(format!(
                    "sweep.sigmas: noise levels must be non-negative, got {sigma}"
                )));
            }
        }
        if self.audit.instances == 0 {
            return Err(ConfigError("audit.instances: must be positive".into()));
        }
        if self.audit.pairs == 0 {
            return Err(ConfigError("audit.pairs: must be positive".into()));
        }
        if !(self.audit.tol.is_finite() && self.audit.tol > 0.0) {
            return Err(ConfigError(format!(
                "audit.tol: must be positive, got {}",
                self.audit.tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum TransformKind {
    Clean,
    Noise,
    Shuffle,
}

fn parse_transform_kind(value: &str) -> Result<TransformKind> {
    match value {
        "clean" => Ok(TransformKind::Clean),
        "noise" => Ok(TransformKind::Noise),
        "shuffle" => Ok(TransformKind::Shuffle),
        other => Err(ConfigError(format!(
            "unknown transform '{other}' (expected clean, noise, or shuffle)"
        ))),
    }
}

fn parse_task_kind(value: &str) -> Result<TaskKind> {
    match value {
        "classification" => Ok(TaskKind::Classification),
        "regression" => Ok(TaskKind::Regression),
        other => Err(ConfigError(format!(
            "unknown task kind '{other}' (expected classification or regression)"
        ))),
    }
}

fn token_mode(mode: &InputMode) -> (usize, usize) {
    match mode {
        InputMode::Token { vocab, seq_len } => (*vocab, *seq_len),
        // Switching from vector mode starts from usable token defaults.
        InputMode::Vector { .. } => (16, 4),
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| {
        ConfigError(format!(
            "invalid value '{value}' ({e}, expected {})",
            std::any::type_name::<T>().rsplit("::").next().unwrap_or("value")
        ))
    })
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => Err(ConfigError(format!(
            "invalid value '{other}' (expected true or false)"
        ))),
    }
}

fn split_list(value: &str) -> Result<Vec<String>> {
    let items: Vec<String> = value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(ConfigError("list must not be empty".into()));
    }
    Ok(items)
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    split_list(value)?.iter().map(|s| parse(s)).collect()
}

fn stringify(e: armada_core::Error) -> ConfigError {
    ConfigError(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_the_defaults() {
        let cfg = ExperimentConfig::parse("", "<defaults>").unwrap();
        assert_eq!(cfg.spec.train.loss.alpha, 0.5);
        assert_eq!(cfg.spec.train.loss.beta, 1.0);
        assert_eq!(cfg.spec.train.loss.gamma, 1.0);
        assert_eq!(cfg.spec.train.loss.tau, 5.0);
        assert_eq!(cfg.sweep.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.sweep.variants.len(), 3);
        assert_eq!(cfg.spec.transform, RepTransform::Clean);
    }

    #[test]
    fn default_sweep_grid_has_the_canonical_cardinality() {
        let g = ExperimentConfig::parse("", "<defaults>").unwrap().sweep;
        let points = g.alpha.len() * g.beta.len() * g.gamma.len() * g.variants.len();
        assert_eq!(points * g.seeds.len(), 120);
    }

    #[test]
    fn keys_comments_and_lists_parse() {
        let text = "\
# reference run, shrunk
task.n_train = 48   # inline comment
task.noise = 3.0
teacher.d_t = 16
train.epochs = 4
loss.alpha = 0.25
loss.variant = cosine
transform.kind = noise
transform.sigma = 2.5
sweep.seeds = 7, 8,9
sweep.variants = euclid , elementwise
";
        let cfg = ExperimentConfig::parse(text, "t").unwrap();
        assert_eq!(cfg.spec.task.n_train, 48);
        assert_eq!(cfg.spec.teacher.d_t, 16);
        assert_eq!(cfg.spec.train.epochs, 4);
        assert_eq!(cfg.spec.train.loss.alpha, 0.25);
        assert_eq!(cfg.spec.train.loss.variant, ManifoldVariant::Cosine);
        assert_eq!(cfg.spec.transform, RepTransform::Noise(2.5));
        assert_eq!(cfg.sweep.seeds, vec![7, 8, 9]);
        assert_eq!(
            cfg.sweep.variants,
            vec![ManifoldVariant::Euclid, ManifoldVariant::Elementwise]
        );
    }

    #[test]
    fn task_kind_propagates_into_the_loss() {
        let cfg = ExperimentConfig::parse("task.kind = regression\ntrain.metric = pearson\n", "t")
            .unwrap();
        assert_eq!(cfg.spec.task.kind, TaskKind::Regression);
        assert_eq!(cfg.spec.train.loss.task, TaskKind::Regression);
    }

    #[test]
    fn errors_carry_line_and_key() {
        let err = ExperimentConfig::parse("task.n_train = many\n", "bad.cfg").unwrap_err();
        assert!(err.0.contains("bad.cfg:1"), "{}", err.0);
        assert!(err.0.contains("task.n_train"), "{}", err.0);

        let err = ExperimentConfig::parse("\n\nno_equals_here\n", "bad.cfg").unwrap_err();
        assert!(err.0.contains("bad.cfg:3"), "{}", err.0);

        let err = ExperimentConfig::parse("task.sedd = 4\n", "bad.cfg").unwrap_err();
        assert!(err.0.contains("unknown key"), "{}", err.0);
    }

    #[test]
    fn cross_field_validation_catches_bad_combinations() {
        let err = ExperimentConfig::parse("loss.alpha = 1.5\n", "t").unwrap_err();
        assert!(err.0.contains("alpha"), "{}", err.0);

        let err = ExperimentConfig::parse("teacher.train_reps = only_half.armd\n", "t").unwrap_err();
        assert!(err.0.contains("together"), "{}", err.0);

        let err = ExperimentConfig::parse("sweep.sigmas = 1, -2\n", "t").unwrap_err();
        assert!(err.0.contains("non-negative"), "{}", err.0);
    }

    #[test]
    fn token_mode_keys_compose() {
        let cfg = ExperimentConfig::parse("task.vocab = 32\ntask.seq_len = 6\n", "t").unwrap();
        assert_eq!(cfg.spec.task.mode, InputMode::Token { vocab: 32, seq_len: 6 });
    }
}
