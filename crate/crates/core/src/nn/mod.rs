//! Dense network substrate: matrices, the MLP with exact backprop, Adam,
//! finite-difference checking and checkpoints.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;

pub use adam::{cosine_lr, AdamConfig, AdamState};
pub use gradcheck::{
    compare_grads, finite_diff, finite_diff_grad, relative_error, GradCheckReport, ParamKind,
    WorstCoordinate,
};
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardCache, Layer, MlpGrads, MlpParams};
