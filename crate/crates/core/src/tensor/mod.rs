//! Dense 2-D tensors with reverse-mode differentiation.

mod gradcheck;
mod matrix;
mod optim;
mod param;
pub mod snapshot;
mod tape;

pub use gradcheck::{finite_diff_check, param_grad_check, relative_error};
pub use matrix::Matrix;
pub use optim::{adam_step, Adam, AdamConfig, AdamState};
pub use param::Param;
pub use tape::{Reduce, Tape, Tensor};

/// Slope used by every LeakyReLU unless a layer overrides it.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
