// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by the numerical routines and the configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user input does not hold.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two operands live on different grids or spaces.
    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    /// The digits carried by the operands cannot determine the result.
    #[error("insufficient truncation: {0}")]
    InsufficientTruncation(String),

    /// A series could not reach its tolerance within the term budget.
    #[error("series tolerance {requested:e} not reached after {terms} terms (tail bound {achieved:e})")]
    SeriesBudget {
        requested: f64,
        achieved: f64,
        terms: usize,
    },

    /// The requested state space exceeds the configured budget.
    #[error("state space of {cells} cells exceeds the budget of {limit}")]
    Budget { cells: u128, limit: u128 },

    /// Two independent computations of the same object disagree.
    #[error("method disagreement: {what} differs by {diff:e} (tolerance {tol:e})")]
    Disagreement { what: String, diff: f64, tol: f64 },

    /// A nonlinear solve did not converge.
    #[error("solver did not converge: residual {residual:e} after {iterations} iterations ({detail})")]
    NonConvergence {
        residual: f64,
        iterations: usize,
        detail: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SeriesBudget { .. } | Error::Disagreement { .. } | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
