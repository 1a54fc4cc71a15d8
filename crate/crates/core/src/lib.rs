//! Robust Bayesian inference with median-of-means posteriors.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod models;
pub mod mom;
pub mod quadrature;
pub mod rho;

pub use error::{Error, Result};
