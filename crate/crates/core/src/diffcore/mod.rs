//! Dense tensor arithmetic with reverse-mode gradients, parameter storage,
//! neural building blocks, and Adam: the substrate the learned parts of the
//! pipeline run on.

mod fd;
mod matrix;
mod nn;
mod store;
mod tape;

pub use fd::{finite_difference_check, FD_STEP};
pub use matrix::DenseMatrix;
pub use nn::{gru_cell, mlp_forward, Activation, GruSpec, MlpSpec};
pub use store::{CheckpointError, ParameterStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Gradients, SparseMat, Tape, Tensor, L2_NORM_EPS};
