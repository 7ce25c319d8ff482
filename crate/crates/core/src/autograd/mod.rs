//! Dense row-major `f64` tensors with a define-by-run tape for reverse-mode
//! gradients, plus the few network blocks the policies need, a
//! finite-difference gradient checker, Adam, and parameter checkpoints.

mod adam;
mod gemm;
mod gradcheck;
mod nn;
mod params;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, AdamStats};
pub use gradcheck::grad_check;
pub use nn::{linear, lstm_cell, scaled_dot_attention, LstmParams};
pub use params::{ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },

    #[error("{0}")]
    Argument(String),
}
