use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the robust-posterior machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {theta:?} lies outside the parameter domain")]
    Domain { theta: Vec<f64> },

    #[error("log-likelihood is not differentiable at this point (Laplace kink)")]
    NonDifferentiablePoint,

    #[error("the absolute loss has no second derivative")]
    UnsupportedLoss,

    #[error("invalid loss specification: {0}")]
    InvalidLoss(String),

    #[error("invalid number of blocks k = {k} for N = {n} observations (need 1 <= k <= N/2)")]
    InvalidK { k: usize, n: usize },

    #[error("non-finite value in block averages")]
    NonFiniteInput,

    #[error("all blocks sit in the flat part of the loss; score derivative vanishes")]
    FlatScore,

    #[error("dataset is empty")]
    EmptyData,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("need at least {needed} pooled draws, got {got}")]
    InsufficientDraws { needed: usize, got: usize },

    #[error("reference covariance is not positive definite")]
    SingularCovariance,

    #[error("cannot contaminate {count} observations of a dataset of size {n}")]
    TooManyOutliers { count: usize, n: usize },

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("column '{0}' has zero variance")]
    ZeroVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
