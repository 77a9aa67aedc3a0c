//! Regularizer mirror descent (RMD), stochastic mirror descent and SGD for
//! overparameterized models, with exact convex oracles for linear models
//! and a seeded experiment harness.

pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod oracle;
pub mod parallel;
pub mod potential;

pub use error::{Error, Result};
