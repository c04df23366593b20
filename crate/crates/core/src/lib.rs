//! Fourier-multiplier lab for elliptic and parabolic convolution operator
//! equations with an abstract sectorial operator `A` on `E = C^n`.
//!
//! Equations are solved on a periodic box by applying operator-valued
//! symbols frequency by frequency; the hypotheses behind each solve are
//! checked numerically on frequency samples.

// `!(x > 0.0)` style guards must also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditions;
pub mod error;
pub mod grammar;
pub mod kernels;
pub mod linalg;
pub mod multiplier;
pub mod rbound;
pub mod rng;
pub mod sectorial;
pub mod solver;

pub use error::{Error, Result};
