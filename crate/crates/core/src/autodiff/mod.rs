//! Dense tensors with reverse-mode differentiation, sized for the predictor.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, BlockReport, GradCheckReport};
pub use tape::{sigmoid, Axis, Gradients, Tape, Var};
pub use tensor::{matmul, Tensor};
