//! Dense tensors, a gradient tape and first-order optimizers.

pub mod gradcheck;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_many, relative_error, GradCheckReport};
pub use optim::{OptimKind, OptimState, ParamGrad};
pub use tape::{sigmoid, softmax_rows, GradTape, Gradients, Reduction, Var, LOG_CLAMP};
pub use tensor::Tensor;
