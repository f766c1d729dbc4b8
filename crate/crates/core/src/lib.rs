//! Desk-scale cross-modal distillation: a frozen teacher's representations
//! are adapted by a small trainable aligner, whose outputs supervise a
//! student through output-space, manifold, and auxiliary-head losses.
//!
//! Everything is deterministic given the configured seeds, and every
//! differentiable path is validated by finite-difference checks in the test
//! suite.

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiments;
mod io_util;
pub mod losses;
pub mod models;
pub mod rng;
pub mod teacher;
pub mod tensor;
pub mod train;

pub use data::{Dataset, InputMode, Inputs, Labels, SyntheticTask, TaskConfig, TaskKind};
pub use error::{Error, Result};
pub use losses::{LossConfig, ManifoldVariant, Prop1Report};
pub use models::{AlignerParams, ForwardOutputs, StudentParams};
pub use teacher::{RepresentationTable, TeacherConfig};
pub use tensor::{backward, grad_check, GradReport, Gradients, Graph, Matrix, Node};
pub use train::{
    train_joint, train_undistilled, EvalScores, Metric, TrainConfig, TrainData, TrainOutcome,
    TrainReport,
};
