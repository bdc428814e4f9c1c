//! Dense tensors and a reverse-mode differentiation tape.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, gradient_check_many, gradient_check_sampled, relative_error};
pub use tape::{Gradients, Tape, Unary, Var, BCE_EPS};
pub use tensor::Tensor;
