// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of the operation (e.g. an angle
    /// outside `[0, π/2]`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid array, schedule or search configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs whose lengths or depths do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The signal subspace could not be separated (rank-deficient shift
    /// matrices or a degenerate array).
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// The estimator could not map a frequency back to an angle.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Fitting failed (too few points or singular normal equations).
    #[error("fit failed: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
