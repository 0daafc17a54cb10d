//! Symmetrical flow matching on small dense networks.
//!
//! One velocity field is trained on two opposing straight-line flows at once:
//! data emerges from noise while its class code dissolves into noise. Run
//! forward, the field generates class-conditional samples; run backward from
//! an observed point, it recovers the class code.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the experiment precision to `f64`.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod flow;
pub mod nn;
pub mod ode;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;

pub type Matrix = nn::Matrix<f64>;
pub type MlpParams = nn::MlpParams<f64>;
pub type MlpGrads = nn::MlpGrads<f64>;
pub type AdamState = nn::AdamState<f64>;
pub type ClassCodebook = codec::ClassCodebook<f64>;
pub type Dataset = datasets::Dataset<f64>;
pub type CoupledSample = flow::CoupledSample<f64>;
pub type CoupledState = flow::CoupledState<f64>;
pub type CoupledVelocity = flow::CoupledVelocity<f64>;
pub type FlowModel = flow::FlowModel<f64>;
pub type Trajectory = ode::Trajectory<f64>;
