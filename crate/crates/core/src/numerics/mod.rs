//! Tensor kernel, AdaDelta and the finite-difference gradient checker.

mod gradcheck;
mod ops;
mod optim;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckOptions, GradCheckReport, Objective, ParamCheck};
pub use ops::{
    affine, axpy, dot, logsumexp, logsumexp_unchecked, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax,
    softmax_in_place,
};
pub use optim::{adadelta_step, AdaDelta, Parameter};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("invalid tensor shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("invalid hyper-parameter: {0}")]
    BadHyperParameter(String),
}
