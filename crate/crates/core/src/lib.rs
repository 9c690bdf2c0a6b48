// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod features;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod occlusion;
pub mod physics;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod storage;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Double-precision tensor used for training and gradient checks.
pub type Tensor64 = Tensor<f64>;
/// Single-precision tensor, the at-rest precision of checkpoints and rasters.
pub type Tensor32 = Tensor<f32>;
/// Double-precision model parameters.
pub type Params64 = model::PVNetParams<f64>;

/// Worker count for eval-mode prediction, from `PVNET_THREADS` (default 1).
pub fn worker_threads() -> usize {
    std::env::var("PVNET_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}
