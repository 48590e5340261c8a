//! Trace-corrected Gram matrix.
//!
//! For `X = Z1 A^{1/2} + B^{1/2} Z2` the raw Gram `X^T X / n` estimates
//! `A + tau_B I`, not `A`: row noise inflates the diagonal by
//! `tau_B = tr(B) / n`. The convention `tr(A) = m` identifies the split, so
//! `tr(B)` is estimable from `||X||_F^2` alone and can be subtracted. The
//! corrected matrix is unbiased for `A` but may be indefinite, which is why
//! the downstream regression solver works on an l1 ball.

use crate::error::{dim_err, param_err, Result};
use crate::linalg::{dot, gram, DenseMatrix, SymmetricMatrix};

/// `X^T X / n` with the estimated noise level removed from the diagonal.
#[derive(Debug, Clone)]
pub struct CorrectedGram {
    /// Estimated `tr(B)`, always `>= 0`.
    pub tr_b_hat: f64,
    /// Estimated per-coordinate noise `tr(B) / n`.
    pub tau_b_hat: f64,
    /// `X^T X / n - tau_b_hat I`, symmetric, possibly indefinite.
    pub gamma_hat: SymmetricMatrix,
    /// `(n, m)` of the data the matrix came from.
    pub source_dims: (usize, usize),
}

impl CorrectedGram {
    pub fn m(&self) -> usize {
        self.gamma_hat.dim()
    }

    pub fn n(&self) -> usize {
        self.source_dims.0
    }
}

/// Per-column regression inputs: the corrected Gram with row/column `j`
/// deleted and the cross column `(1/n) X_{-j}^T X_j`.
#[derive(Debug, Clone)]
pub struct NodewiseInput {
    pub j: usize,
    pub gamma_j: SymmetricMatrix,
    pub gamma_vec_j: Vec<f64>,
}

/// Estimate `(tr(B), tau_B)` from the Frobenius norm of the data and the
/// known signal trace: `tr_hat(B) = max(||X||_F^2 - n tr_A, 0) / m`.
pub fn estimate_trace_b(x: &DenseMatrix, tr_a: f64) -> Result<(f64, f64)> {
    if !(tr_a > 0.0) {
        return Err(param_err("tr_a", format!("{} is not positive", tr_a)));
    }
    let (n, m) = (x.rows(), x.cols());
    let fro_sq = dot(x.as_slice(), x.as_slice());
    let tr_b_hat = ((fro_sq - n as f64 * tr_a) / m as f64).max(0.0);
    Ok((tr_b_hat, tr_b_hat / n as f64))
}

/// `Gamma_hat = X^T X / n - tau_b_hat I`.
pub fn corrected_gram(x: &DenseMatrix, tau_b_hat: f64) -> Result<CorrectedGram> {
    if !tau_b_hat.is_finite() || tau_b_hat < 0.0 {
        return Err(param_err(
            "tau_b_hat",
            format!("{} is not a finite nonnegative value", tau_b_hat),
        ));
    }
    let (n, m) = (x.rows(), x.cols());
    let mut gamma_hat = gram(x, 1.0 / n as f64);
    for j in 0..m {
        let v = gamma_hat.get(j, j) - tau_b_hat;
        gamma_hat.set_sym(j, j, v);
    }
    Ok(CorrectedGram {
        tr_b_hat: tau_b_hat * n as f64,
        tau_b_hat,
        gamma_hat,
        source_dims: (n, m),
    })
}

/// Nodewise inputs for column `j`, computed directly from the data.
/// Identical (bitwise) to deleting row/column `j` from `corrected_gram`:
/// the row-streamed accumulation order of each entry is unchanged by
/// dropping a column, and the correction only touches the diagonal.
pub fn nodewise_input(x: &DenseMatrix, tau_b_hat: f64, j: usize) -> Result<NodewiseInput> {
    let m = x.cols();
    if m < 2 {
        return Err(dim_err("nodewise_input", "needs at least 2 columns"));
    }
    if j >= m {
        return Err(param_err("j", format!("column {} out of range", j)));
    }
    let x_minor = x.drop_column(j)?;
    let scale = 1.0 / x.rows() as f64;
    let mut gamma_j = gram(&x_minor, scale);
    for k in 0..m - 1 {
        let v = gamma_j.get(k, k) - tau_b_hat;
        gamma_j.set_sym(k, k, v);
    }
    let xj = x.column(j);
    let mut gamma_vec_j = vec![0.0f64; m - 1];
    for (r, &xrj) in xj.iter().enumerate() {
        let row = x_minor.row(r);
        for (k, acc) in gamma_vec_j.iter_mut().enumerate() {
            *acc += row[k] * xrj;
        }
    }
    for v in &mut gamma_vec_j {
        *v *= scale;
    }
    Ok(NodewiseInput {
        j,
        gamma_j,
        gamma_vec_j,
    })
}

/// Extract the nodewise inputs for column `j` from an already-computed
/// corrected Gram. Definitionally the same as [`nodewise_input`]; this is
/// the cheap path when all `m` columns are processed.
pub fn nodewise_from_gram(g: &CorrectedGram, j: usize) -> Result<NodewiseInput> {
    let m = g.m();
    if m < 2 {
        return Err(dim_err("nodewise_from_gram", "needs at least 2 columns"));
    }
    if j >= m {
        return Err(param_err("j", format!("column {} out of range", j)));
    }
    // Off-diagonal entries of Gamma_hat are untouched by the tau correction,
    // so the cross column can be read back by re-adding tau to nothing:
    // gamma_vec_j[k] = Gamma_hat[k, j] for k != j, exactly.
    let gamma_vec_j = g.gamma_hat.column_excluding(j)?;
    Ok(NodewiseInput {
        j,
        gamma_j: g.gamma_hat.minor_excluding(j)?,
        gamma_vec_j,
    })
}
