//! Dense `f64` tensors with a reverse-mode gradient tape, batch
//! normalization and RMSprop.

mod batchnorm;
mod error;
pub mod gradcheck;
mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use batchnorm::{BatchNormState, Mode};
pub use error::{Result, TensorError};
pub use optim::{rmsprop_step, RmsProp, RmsPropConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{BatchStats, Gradients, Tape, Var};
pub use tensor::Tensor;
