//! Noisy QAOA simulation on weighted Max-Cut with automatic depth selection
//! through l1-regularized proximal gradient descent.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod operators;
pub mod optimizer;
pub mod problems;
pub mod qaoa;
pub mod report;
pub mod selection;
pub mod verify;

pub use error::{Error, Result};
