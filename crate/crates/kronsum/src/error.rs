//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {delta}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },

    #[error("matrix is not positive definite: lambda_min = {lambda_min}, required > {floor}")]
    NotPositiveDefinite { lambda_min: f64, floor: f64 },

    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("solver diverged: iterate norm {iterate_norm} is not finite")]
    Divergence { iterate_norm: f64 },

    #[error("degenerate diagonal at column {column}: Gamma_jj - Gamma_j,-j beta = {value} <= {floor}")]
    DegenerateDiagonal {
        column: usize,
        value: f64,
        floor: f64,
    },

    #[error("parse error in {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics itself (as opposed to bad inputs).
    /// The CLI maps these to exit code 2 and everything else to exit code 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Divergence { .. }
                | Error::DegenerateDiagonal { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn param_err(name: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        detail: detail.into(),
    }
}

pub(crate) fn parse_err(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Parse {
        what,
        detail: detail.into(),
    }
}
