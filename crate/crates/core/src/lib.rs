//! Robust mean estimation and perturbation-based exploration for stochastic
//! multi-armed bandits with heavy-tailed rewards.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod env;
pub mod error;
pub mod estimators;
pub mod influence;
pub mod perturbation;
pub mod policy;
pub mod quadrature;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
