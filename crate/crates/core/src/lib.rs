//! Multitype branching processes in i.i.d. random environment: transfer
//! operators, moment Lyapunov functions, tilted walks and survival
//! probabilities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod env;
pub mod error;
pub mod matprod;
pub mod matrix;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod survival;
pub mod tilted;

pub use error::{LabError, Result};
pub use matrix::Matrix;
