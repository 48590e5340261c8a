//! Dense row-major matrices and the small set of numerical kernels the
//! estimators need: symmetric eigendecomposition, SPD square roots, spectral
//! norm, soft thresholding and exact projection onto an l1 ball.
//!
//! Everything here is deterministic: no randomized algorithms, no
//! parallel reductions whose result depends on scheduling.

mod eigen;

pub use eigen::{eig_sym, EigenDecomposition};

use crate::error::{dim_err, param_err, Error, Result};

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(param_err("rows/cols", "matrix dimensions must be >= 1"));
        }
        if data.len() != rows * cols {
            return Err(dim_err(
                "DenseMatrix::new",
                format!("{} entries for a {}x{} matrix", data.len(), rows, cols),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be >= 1");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Build from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(param_err("rows", "need at least one row and one column"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(dim_err(
                    "DenseMatrix::from_rows",
                    format!("row {} has {} entries, expected {}", i, r.len(), cols),
                ));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.cols);
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Copy without column `j`.
    pub fn drop_column(&self, j: usize) -> Result<DenseMatrix> {
        if self.cols < 2 {
            return Err(dim_err("drop_column", "matrix has a single column"));
        }
        if j >= self.cols {
            return Err(param_err("j", format!("column {} out of range", j)));
        }
        let mut out = DenseMatrix::zeros(self.rows, self.cols - 1);
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            dst[..j].copy_from_slice(&src[..j]);
            dst[j..].copy_from_slice(&src[j + 1..]);
        }
        Ok(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * other`. Row-parallel for large products; each output row is
    /// computed independently, so the result does not depend on scheduling.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(dim_err(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        let work = self.rows as u64 * self.cols as u64 * other.cols as u64;
        let cols = other.cols;
        let row_op = |(i, out_row): (usize, &mut [f64])| {
            let a_row = self.row(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for j in 0..cols {
                    out_row[j] += aik * b_row[j];
                }
            }
        };
        if work > 8_000_000 {
            use rayon::prelude::*;
            out.data
                .par_chunks_mut(cols)
                .enumerate()
                .for_each(|(i, r)| row_op((i, r)));
        } else {
            for (i, r) in out.data.chunks_mut(cols).enumerate() {
                row_op((i, r));
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(dim_err(
                "matvec",
                format!("{}x{} times vector of length {}", self.rows, self.cols, v.len()),
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= c;
        }
        out
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err(
                "sub",
                format!(
                    "{}x{} minus {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err(
                "add",
                format!(
                    "{}x{} plus {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise max absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Operator l1 norm: maximum absolute column sum.
    pub fn l1_operator_norm(&self) -> f64 {
        let mut sums = vec![0.0f64; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0f64, f64::max)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

/// Square matrix with exact symmetry: `get(i, j) == get(j, i)` bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DenseMatrix);

impl SymmetricMatrix {
    /// Validates exact (bitwise) symmetry of the given dense matrix.
    pub fn from_dense(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(dim_err(
                "SymmetricMatrix::from_dense",
                format!("{}x{} is not square", m.rows, m.cols),
            ));
        }
        for i in 0..m.rows {
            for j in (i + 1)..m.cols {
                let a = m.get(i, j);
                let b = m.get(j, i);
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        delta: (a - b).abs(),
                    });
                }
            }
        }
        Ok(Self(m))
    }

    /// Fill both triangles from `f(i, j)` evaluated once per unordered pair.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DenseMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Self(m)
    }

    /// Exact midpoint symmetrization `(M + M^T) / 2`.
    pub fn symmetrized(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(dim_err(
                "SymmetricMatrix::symmetrized",
                format!("{}x{} is not square", m.rows, m.cols),
            ));
        }
        Ok(Self::from_fn(m.rows, |i, j| {
            0.5 * (m.get(i, j) + m.get(j, i))
        }))
    }

    pub fn identity(n: usize) -> Self {
        Self(DenseMatrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DenseMatrix::zeros(n, n))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Set both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.0.set(i, j, v);
        self.0.set(j, i, v);
    }

    pub fn dense(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&self, c: f64) -> SymmetricMatrix {
        SymmetricMatrix(self.0.scale(c))
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.0.matvec(v)
    }

    /// Principal submatrix with row and column `j` removed.
    pub fn minor_excluding(&self, j: usize) -> Result<SymmetricMatrix> {
        let n = self.dim();
        if n < 2 {
            return Err(dim_err("minor_excluding", "dimension must be >= 2"));
        }
        if j >= n {
            return Err(param_err("j", format!("index {} out of range", j)));
        }
        Ok(SymmetricMatrix::from_fn(n - 1, |a, b| {
            let i = if a < j { a } else { a + 1 };
            let k = if b < j { b } else { b + 1 };
            self.get(i, k)
        }))
    }

    /// Column `j` with entry `j` removed.
    pub fn column_excluding(&self, j: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        if j >= n {
            return Err(param_err("j", format!("index {} out of range", j)));
        }
        Ok((0..n).filter(|&i| i != j).map(|i| self.get(i, j)).collect())
    }

    /// Principal submatrix on the given index set (sorted, distinct).
    pub fn principal_submatrix(&self, idx: &[usize]) -> Result<SymmetricMatrix> {
        if idx.is_empty() {
            return Err(param_err("idx", "index set must be nonempty"));
        }
        for &i in idx {
            if i >= self.dim() {
                return Err(param_err("idx", format!("index {} out of range", i)));
            }
        }
        Ok(SymmetricMatrix::from_fn(idx.len(), |a, b| {
            self.get(idx[a], idx[b])
        }))
    }

    /// Inverse via eigendecomposition. Requires SPD with the same relative
    /// floor as [`sqrt_spd`].
    pub fn inverse_spd(&self) -> Result<SymmetricMatrix> {
        let eig = eig_sym(self)?;
        check_spd(&eig)?;
        Ok(eig.recompose(|l| 1.0 / l))
    }
}

const SPD_REL_FLOOR: f64 = 1e-10;

fn check_spd(eig: &EigenDecomposition) -> Result<()> {
    let lambda_min = eig.values[0];
    let lambda_max = *eig.values.last().unwrap();
    let floor = SPD_REL_FLOOR * lambda_max.max(0.0);
    if !(lambda_min > floor) {
        return Err(Error::NotPositiveDefinite { lambda_min, floor });
    }
    Ok(())
}

/// Symmetric square root of an SPD matrix: the unique SPD `R` with `R R = M`.
/// Requires `lambda_min > 1e-10 * lambda_max`.
pub fn sqrt_spd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = eig_sym(m)?;
    check_spd(&eig)?;
    Ok(eig.recompose(f64::sqrt))
}

/// Square root for PSD matrices: eigenvalues in `[-tol, 0)` with
/// `tol = 1e-10 * max(lambda_max, 0)` are clamped to zero, anything more
/// negative is an error.
pub fn sqrt_psd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = eig_sym(m)?;
    let lambda_max = *eig.values.last().unwrap();
    let tol = SPD_REL_FLOOR * lambda_max.max(0.0);
    let lambda_min = eig.values[0];
    if lambda_min < -tol {
        return Err(Error::NotPositiveDefinite {
            lambda_min,
            floor: -tol,
        });
    }
    Ok(eig.recompose(|l| l.max(0.0).sqrt()))
}

/// Largest singular value, computed from the Gram matrix of the shorter side.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    // Gram of the shorter side keeps the eigenproblem as small as possible.
    let g = if m.rows <= m.cols {
        gram_of_transpose(m)
    } else {
        gram(m, 1.0)
    };
    let eig = eig_sym(&g)?;
    Ok(eig.values.last().unwrap().max(0.0).sqrt())
}

/// `scale * X^T X`, accumulated row by row, exactly symmetric by construction.
pub fn gram(x: &DenseMatrix, scale: f64) -> SymmetricMatrix {
    let m = x.cols;
    let mut g = vec![0.0f64; m * m];
    for r in 0..x.rows {
        let row = x.row(r);
        for j in 0..m {
            let xj = row[j];
            if xj == 0.0 {
                continue;
            }
            let dst = &mut g[j * m..(j + 1) * m];
            for k in j..m {
                dst[k] += xj * row[k];
            }
        }
    }
    SymmetricMatrix::from_fn(m, |i, j| g[i * m + j] * scale)
}

/// `X X^T`, accumulated with contiguous row dots.
fn gram_of_transpose(x: &DenseMatrix) -> SymmetricMatrix {
    SymmetricMatrix::from_fn(x.rows, |i, j| dot(x.row(i), x.row(j)))
}

/// Dot product with four independent accumulators so the reduction does not
/// serialize on floating-point add latency. Deterministic: the accumulation
/// order is fixed by the slice layout alone.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Elementwise `sign(v) * max(|v| - t, 0)` with `t >= 0`.
pub fn soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    assert!(t >= 0.0, "soft threshold requires t >= 0");
    v.iter().map(|&x| soft_threshold_scalar(x, t)).collect()
}

pub fn soft_threshold_scalar(x: f64, t: f64) -> f64 {
    let mag = x.abs() - t;
    if mag > 0.0 {
        mag * x.signum()
    } else {
        0.0
    }
}

/// Euclidean projection onto `{ x : ||x||_1 <= radius }` by the exact
/// sort-based threshold search. Inside the ball the input is returned
/// unchanged (bitwise).
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) {
        return Err(param_err("radius", format!("{} is not >= 0", radius)));
    }
    if l1_norm(v) <= radius {
        return Ok(v.to_vec());
    }
    if radius == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (j, &mu) in mags.iter().enumerate() {
        cum += mu;
        let candidate = (cum - radius) / (j + 1) as f64;
        // the first pivot always qualifies when radius > 0; the explicit
        // j == 0 case guards against cancellation at extreme magnitudes
        if j == 0 || mu > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    // the optimal threshold is nonnegative; cancellation in cum - radius
    // can push the winning candidate a few ulps below zero
    Ok(soft_threshold(v, tau.max(0.0)))
}
