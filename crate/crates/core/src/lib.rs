//! Exact single-input priors of finite deep linear and ReLU networks.

pub mod asymptotics;
pub mod error;
pub mod linear_prior;
pub mod mc_oracle;
pub mod relu_prior;
pub mod specfun;
pub mod tails;
pub mod validation;

pub use error::{Error, Result};
