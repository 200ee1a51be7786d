//! Identifiability-based auditing of differentially private training.
//!
//! The crate translates `(epsilon, delta)` guarantees into bounds on what a
//! strong Bayesian adversary can learn about which of two neighboring
//! datasets was used, simulates that adversary against the Gaussian
//! mechanism and full-batch DPSGD, and estimates the privacy loss that
//! was actually realized.

// Published approximation constants are kept digit for digit, and `!(x > 0.0)`
// is the idiom used throughout to reject NaN together with out-of-range values.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod audit;
pub mod bounds;
pub mod data;
pub mod dp;
pub mod error;
pub mod learner;
pub mod normal;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
