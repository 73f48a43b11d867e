//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by data ingestion, numerical routines and analytics.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (CSV rows, parameter files).
    #[error("input error: {0}")]
    Input(String),

    /// A model invariant or precondition was violated.
    #[error("invalid model: {0}")]
    Model(String),

    /// A numerical routine failed (instability, non-convergence, singularity).
    #[error("numerical failure: {0}")]
    Numerics(String),

    /// A query fell outside the supported domain (grid, tenor range, ...).
    #[error("out of domain: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
