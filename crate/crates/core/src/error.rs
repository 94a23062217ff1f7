//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by model construction, certification, simulation and I/O.
#[derive(Error, Debug)]
pub enum Error {
    /// Vector/matrix dimensions do not match the declared degrees of freedom.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value violates a documented invariant (non-positive mass, empty
    /// grid, non-monotone timestamp, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A linear solve or eigendecomposition failed where the model
    /// guarantees it should not.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Scenario file could not be parsed; the message names the offending
    /// key and location.
    #[error("config error in {path}: {detail}")]
    Config { path: String, detail: String },

    /// The integrated state left the configured blow-up bound.
    #[error("simulation diverged at t = {t:.6} s (state norm {norm:.3e})")]
    Divergence { t: f64, norm: f64 },

    /// Filesystem error while reading scenarios or writing reports.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
