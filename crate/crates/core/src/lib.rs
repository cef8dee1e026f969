//! Fairness-aware node regression on attributed graphs.
//!
//! The crate is `no_std` (with `alloc`) and holds the whole numerical
//! pipeline:
//!
//! - [`graph`]: attributed graphs and the fairness-reweighted, symmetric
//!   normalized adjacency used for message passing.
//! - [`tape`] and [`adam`]: a small dense reverse-mode differentiation engine
//!   and the Adam optimizer with decoupled weight decay.
//! - [`model`]: a two-layer GCN encoder with a linear regression head.
//! - [`fairness`]: RBF-kernel MMD on embeddings, debiased Sinkhorn divergence
//!   and moment matching on predictions.
//! - [`metrics`]: MSE, MAE, mean gap, variance gap and 1-D Wasserstein distance.
//! - [`trainer`]: the training loop, early stopping and ablation cases.
//!
//! File formats, synthetic data generation and the command-line tool live in
//! the companion `fnrgnn` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod error;
pub mod fairness;
pub mod gradcheck;
pub mod graph;
pub mod math;
pub mod metrics;
pub mod model;
mod sinkhorn;
pub mod sparse;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, ReweightConfig, ReweightedAdjacency};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
