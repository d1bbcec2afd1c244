//! Small sequence-network toolkit with hand-written backward passes.
//!
//! Everything is `f64`. Layers own [`ParamId`] handles into a shared
//! [`ParamStore`]; forward passes return caches and backward passes
//! accumulate into a separate [`Gradients`] buffer, so several backward
//! passes can share one store.

mod adam;
mod dense;
mod gradcheck;
mod gru;
mod param;
mod schedule;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use dense::{Activation, Dense, DenseCache};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use gru::{Gru, GruCache};
pub use param::{glorot_uniform, orthogonal, Gradients, ParamId, ParamStore, ParamTensor};
pub use schedule::{kl_weight_at, lr_at, TrainSchedule};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
}
