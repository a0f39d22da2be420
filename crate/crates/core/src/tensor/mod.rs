//! Dense `f64` matrices with tape-based reverse-mode differentiation and Adam.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod value;

pub use checkpoint::{StoreCheckpoint, CHECKPOINT_VERSION};
pub use gradcheck::{finite_difference_check, GradCheckReport, FD_MAGNITUDE_FLOOR, FD_STEP};
pub use graph::{Graph, Var, LAYER_NORM_EPS};
pub use params::{Gradients, ParamId, ParameterStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use value::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("expected a 1x1 tensor, got {shape:?}")]
    NotScalar { shape: [usize; 2] },
    #[error("row {row} has every entry masked")]
    FullyMasked { row: usize },
    #[error("mask has {got} entries, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("corrupt parameter store: {0}")]
    CorruptStore(String),
}

impl TensorError {
    fn shape(op: &'static str, a: &Tensor, b: &Tensor) -> Self {
        TensorError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        }
    }
}
