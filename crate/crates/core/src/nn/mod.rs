//! Minimal differentiable-operator engine in double precision.

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod init;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod sparse;
mod tensor;

use thiserror::Error;

pub use conv::{conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward};
pub use layers::{Layer, LayerSpec, Mode, Param, Sequential};
pub use optim::{adam_step, Adam, AdamConfig, AdamState};
pub use sparse::SparseConvMatrix;
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("transposed convolution of {input:?} with kernel {kernel}, stride {stride}, padding {padding} has no positive output size")]
    NonPositiveOutput {
        input: (usize, usize),
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    #[error("dropout rate {0} is outside [0, 1)")]
    InvalidRate(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl NnError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::Shape(msg.into())
    }
}
