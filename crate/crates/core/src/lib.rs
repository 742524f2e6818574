//! Frequency-severity insurance pricing: benchmark GLMs and boosted trees,
//! feed-forward and combined actuarial networks with autoencoder embeddings,
//! forecast evaluation, model interpretation, surrogate distillation and
//! tariff comparison.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, orchestration
//! and the command line live in the `pricing` crate.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;

pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod gbm;
pub mod glm;
pub mod interpretation;
pub mod linalg;
pub mod math;
pub mod model;
pub mod neural;
pub mod rng;
pub mod surrogate;
pub mod tariff;

pub use error::{Error, Result};
pub use model::{Model, Predictor};
