//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
#[allow(clippy::module_inception)]
mod tensor;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{hex, sha256, Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_params, STEP as GRAD_CHECK_STEP};
pub use graph::{Gradients, Graph, Var, LAYER_NORM_EPS};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
