//! Dense matrices and the reverse-mode autodiff tape built on them.

mod gradcheck;
mod graph;
mod matrix;

pub use gradcheck::{grad_check, GradReport};
pub use graph::{backward, Gradients, Graph, Node};
pub use matrix::Matrix;
