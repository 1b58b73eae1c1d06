#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Building blocks for benchmarking action-smoothing methods in
//! policy-gradient reinforcement learning.

pub mod autodiff;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod metrics;
pub mod policies;
pub mod ppo;
pub mod regularizers;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
