//! Precision matrix estimation for matrix-variate data whose covariance is a
//! Kronecker sum: one observed matrix carries a column-covariance signal plus
//! row-correlated additive noise, and both precision matrices are recovered
//! by trace-corrected nodewise regression.

pub mod error;
pub mod gram;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod precision;
pub mod replicates;
pub mod solver;

pub use error::{Error, Result};
