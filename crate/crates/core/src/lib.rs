//! A hierarchical spatial-temporal transformer that lifts 2D pose sequences
//! to 3D, built on a small define-by-run autodiff engine.
//!
//! The crate covers the tensor engine ([`tape`], [`gradcheck`]), the skeleton
//! taxonomy ([`skeleton`]), the network and its complexity counters
//! ([`model`]), training ([`training`]), evaluation ([`metrics`]) and dataset
//! formats plus a synthetic motion generator ([`data`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod skeleton;
pub mod tape;
pub mod tensor;
pub mod training;
pub mod verify;

pub use error::{Error, Result, TensorError};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
