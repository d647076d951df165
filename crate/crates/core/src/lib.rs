//! Adaptive personalized federated learning simulator.
//!
//! Each client keeps a local model `v`, a local copy `w` of the global model,
//! and a mixing weight `alpha`; its personalized model is `alpha * v + (1 -
//! alpha) * w`. The crate provides the data generators, model objectives,
//! round engine, heterogeneity diagnostics, and the experiment harness behind
//! the `apfl` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod federation;
pub mod harness;
pub mod models;
pub mod numkit;

pub use error::{Error, Result};
pub use exec::Execution;
