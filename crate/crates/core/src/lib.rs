//! Sliding-window attention training laboratory.
//!
//! The crate provides a small dense tensor library with reverse-mode
//! autodiff, the attention variants studied here (softmax, sigmoid, linear
//! distance bias with balanced slopes, rotary embeddings, banded causal
//! masks), a configurable causal language model, byte-level data handling,
//! AdamW training, sliding-window evaluation with a ring KV cache, and
//! diagnostics for attention sinks, softmax sparsity and inference cost.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! name the two instantiations used in practice.

pub mod analysis;
pub mod attention;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f64 tensor, used for gradient checks and oracle comparisons.
pub type Tensor64 = tensor::Tensor<f64>;
/// f32 tensor, used for training throughput and storage.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tape64 = tensor::Tape<f64>;
pub type Tape32 = tensor::Tape<f32>;

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
