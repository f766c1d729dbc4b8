//! Shared fixtures for the criterion benchmarks: deterministic model
//! parameters, batches, and teacher outputs at a fixed desk scale, so every
//! bench measures the same work.

use armada_core::data::{Inputs, Labels};
use armada_core::experiments::RunSpec;
use armada_core::losses::LossConfig;
use armada_core::models::{
    aligner_forward, gaussian_matrix, AlignerConfig, AlignerParams, DetachedOutputs,
    StudentConfig, StudentInput, StudentParams,
};
use armada_core::tensor::{Graph, Matrix};
use armada_core::{rng, Result};

pub const FEATURES: usize = 8;
pub const TEACHER_DIM: usize = 16;
pub const CLASSES: usize = 2;
pub const WIDTH: usize = 16;
pub const MANIFOLD: usize = 8;

/// One batch of student inputs/labels plus detached teacher-side outputs,
/// everything a student loss-and-gradient step consumes.
pub struct StepFixture {
    pub student: StudentParams,
    pub inputs: Inputs,
    pub labels: Labels,
    pub teacher: DetachedOutputs,
    pub loss: LossConfig,
}

/// Deterministic gaussian matrix for bench inputs.
pub fn bench_matrix(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    gaussian_matrix(rows, cols, 1.0, &mut rng::stream(seed, "bench.matrix"))
}

/// Builds the standard step fixture for a given batch size.
pub fn step_fixture(batch: usize, seed: u64) -> Result<StepFixture> {
    let student = StudentParams::init(
        &StudentConfig {
            input: StudentInput::VectorDim(FEATURES),
            width: WIDTH,
            manifold: MANIFOLD,
            classes: CLASSES,
        },
        rng::mix(seed, 1),
    )?;
    let aligner = AlignerParams::init(
        &AlignerConfig {
            d_t: TEACHER_DIM,
            hidden: WIDTH,
            manifold: MANIFOLD,
            classes: CLASSES,
            extra_layers: 0,
            with_heads: true,
        },
        rng::mix(seed, 2),
    )?;

    // The teacher side is a real aligner forward pass, detached, so the
    // student loss sees realistically scaled targets.
    let reps = bench_matrix(batch, TEACHER_DIM, rng::mix(seed, 3))?;
    let g = Graph::new();
    let teacher = aligner_forward(&g, &aligner.bind(&g), &reps)?.detach();

    let labels = Labels::Classes((0..batch).map(|i| i % CLASSES).collect());
    Ok(StepFixture {
        student,
        inputs: Inputs::Vectors(bench_matrix(batch, FEATURES, rng::mix(seed, 4))?),
        labels,
        teacher,
        loss: LossConfig::default(),
    })
}

/// A complete small run recipe for the end-to-end benchmark.
pub fn bench_run_spec() -> RunSpec {
    let mut spec = RunSpec::default();
    spec.task.n_train = 32;
    spec.task.n_test = 32;
    spec.teacher.d_t = TEACHER_DIM;
    spec.train.epochs = 1;
    spec.train.batch_size = 8;
    spec.train.hidden = WIDTH;
    spec.train.width = WIDTH;
    spec.train.manifold = MANIFOLD;
    spec
}
