//! Random Shopper Model.
//!
//! Items shown together for a query are ranked by the stationary distribution
//! of a random walk: each feature contributes a preference chain over the
//! displayed items, the chains are mixed by learned weights, and a uniform
//! restart keeps the walk ergodic. Because every chain is built relative to the
//! items on display, the model can prefer A to B in one context and B to A in
//! another.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod baselines;
pub mod data;
pub mod demo;
pub mod error;
pub mod eval;
pub mod learner;
pub mod markov;
pub mod tolerances;
pub mod seeds;
pub mod topology;

pub use error::{Result, RsmError};
