//! Proximal policy optimization for compound (multi-sub-action) action spaces.
//!
//! Four policy losses are provided: the usual joint-probability loss, a
//! per-sub-action loss, a mixed-ratio loss and a mixed loss. Everything
//! needed to compare them is in this crate: a small MLP with manual
//! backpropagation, distribution heads, GAE, two toy environments and serial
//! and asynchronous training loops with clip telemetry.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod env;
pub mod error;
pub mod loss;
pub mod nn;
pub mod rollout;
pub mod train;

pub use error::{Error, Result};
