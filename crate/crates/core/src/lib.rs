//! Compositional modelling and verification of building automation systems.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod components;
pub mod composer;
pub mod discretize;
pub mod dynamics;
pub mod error;
pub mod hybrid;
pub mod io;
pub mod reach;
mod serde_mat;
pub mod simulate;
pub mod stochastic;

pub use error::{BasError, Result};
