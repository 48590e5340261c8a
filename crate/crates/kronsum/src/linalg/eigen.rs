//! Symmetric eigendecomposition via Householder tridiagonalization followed
//! by implicit-shift QL iteration, with the orthogonal transform accumulated.
//!
//! The loops are arranged so every O(n^2) inner pass streams over contiguous
//! rows; QL rotations are collected per sweep and replayed row by row, which
//! is arithmetically identical to the textbook column-pair updates but does
//! not stride the whole matrix per rotation.

use super::{dot, DenseMatrix, SymmetricMatrix};
use crate::error::{param_err, Error, Result};

/// Returns `dot(row, u)` and accumulates `acc += uk * row` in the same pass.
#[inline]
fn dot_axpy(row: &[f64], u: &[f64], acc: &mut [f64], uk: f64) -> f64 {
    let mut s = [0.0f64; 4];
    let chunks = row.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        s[0] += row[i] * u[i];
        s[1] += row[i + 1] * u[i + 1];
        s[2] += row[i + 2] * u[i + 2];
        s[3] += row[i + 3] * u[i + 3];
        acc[i] += uk * row[i];
        acc[i + 1] += uk * row[i + 1];
        acc[i + 2] += uk * row[i + 2];
        acc[i + 3] += uk * row[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..row.len() {
        tail += row[i] * u[i];
        acc[i] += uk * row[i];
    }
    (s[0] + s[2]) + (s[1] + s[3]) + tail
}

/// Eigendecomposition of a symmetric matrix: `M = U diag(values) U^T` with
/// `values` ascending and the k-th column of `vectors` the k-th eigenvector.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl EigenDecomposition {
    /// `U diag(f(values)) U^T`, exactly symmetric by construction.
    pub fn recompose(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let n = self.values.len();
        let g: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let u = &self.vectors;
        let mut scaled = vec![0.0f64; n];
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let ui = u.row(i);
            for k in 0..n {
                scaled[k] = ui[k] * g[k];
            }
            for j in i..n {
                let v = dot(&scaled, u.row(j));
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        SymmetricMatrix::from_dense(out).expect("symmetric by construction")
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.recompose(|l| l)
    }

    pub fn lambda_min(&self) -> f64 {
        self.values[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Maximum QL iterations per eigenvalue before reporting non-convergence.
const MAX_QL_ITERS: usize = 50;

/// Full eigendecomposition of a symmetric matrix. Eigenvalues ascend;
/// eigenvectors are orthonormal columns. Exactly diagonal inputs short-circuit
/// to a sort of the diagonal.
pub fn eig_sym(m: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    for i in 0..n {
        for j in i..n {
            if !m.get(i, j).is_finite() {
                return Err(param_err(
                    "matrix",
                    format!("non-finite entry at ({}, {})", i, j),
                ));
            }
        }
    }
    if is_diagonal(m) {
        return Ok(sorted_diagonal(m));
    }
    let mut z: Vec<f64> = m.dense().as_slice().to_vec();
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    tred2(&mut z, &mut d, &mut e, n);
    tql2(&mut z, &mut d, &mut e, n)?;
    Ok(sort_eigenpairs(z, d, n))
}

fn is_diagonal(m: &SymmetricMatrix) -> bool {
    let n = m.dim();
    for i in 0..n {
        for j in (i + 1)..n {
            if m.get(i, j) != 0.0 {
                return false;
            }
        }
    }
    true
}

fn sorted_diagonal(m: &SymmetricMatrix) -> EigenDecomposition {
    let n = m.dim();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| m.get(a, a).partial_cmp(&m.get(b, b)).unwrap());
    let values: Vec<f64> = idx.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vectors.set(i, k, 1.0);
    }
    EigenDecomposition { values, vectors }
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transform in `z`. On exit `d` holds the diagonal, `e[1..]` the
/// subdiagonal.
fn tred2(z: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) {
    let mut u = vec![0.0f64; n];
    let mut p = vec![0.0f64; n];
    let mut p_scratch = vec![0.0f64; n];
    for i in (1..n).rev() {
        let l = i;
        let mut h = 0.0;
        if l > 1 {
            let scale: f64 = z[i * n..i * n + l].iter().map(|v| v.abs()).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l - 1];
            } else {
                for k in 0..l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l - 1];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l - 1] = f - g;
                u[..l].copy_from_slice(&z[i * n..i * n + l]);
                // p = (active block) * u / h, streaming over lower-triangle rows;
                // each row is read once, feeding both the dot and the axpy
                p[..l].iter_mut().for_each(|v| *v = 0.0);
                for k in 0..l {
                    let uk = u[k];
                    let row = &z[k * n..k * n + k + 1];
                    p[k] += dot_axpy(&row[..k], &u[..k], &mut p_scratch[..k], uk)
                        + row[k] * uk;
                }
                for (pv, sv) in p[..l].iter_mut().zip(&mut p_scratch[..l]) {
                    *pv += *sv;
                    *sv = 0.0;
                }
                let mut f_acc = 0.0;
                for j in 0..l {
                    p[j] /= h;
                    f_acc += p[j] * u[j];
                }
                let hh = f_acc / (h + h);
                // e[0..l] holds q = p - (u^T p / 2h) u for the rank-2 update
                for j in 0..l {
                    e[j] = p[j] - hh * u[j];
                }
                for j in 0..l {
                    z[j * n + i] = u[j] / h;
                }
                for j in 0..l {
                    let fj = u[j];
                    let gj = e[j];
                    let row = &mut z[j * n..j * n + j + 1];
                    for k in 0..=j {
                        row[k] -= fj * e[k] + gj * u[k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l - 1];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    // accumulate the transform
    let mut g = vec![0.0f64; n];
    for i in 0..n {
        let l = i;
        if d[i] != 0.0 {
            g[..l].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..l {
                let uik = z[i * n + k];
                if uik != 0.0 {
                    let row = &z[k * n..k * n + l];
                    for (t, r) in g[..l].iter_mut().zip(row) {
                        *t += uik * r;
                    }
                }
            }
            for k in 0..l {
                let cki = z[k * n + i];
                if cki != 0.0 {
                    let row = &mut z[k * n..k * n + l];
                    for (r, gv) in row.iter_mut().zip(&g[..l]) {
                        *r -= gv * cki;
                    }
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..l {
            z[i * n + j] = 0.0;
            z[j * n + i] = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on the tridiagonal form, accumulating the
/// rotations into `z`.
///
/// Rotation generation only reads the tridiagonal data, so all rotations are
/// buffered and replayed against `z` in a single streaming pass per row. The
/// per-row rotation sequence is identical to the textbook in-place update;
/// only the matrix traffic changes.
fn tql2(z: &mut [f64], d: &mut [f64], e: &mut [f64], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    // Each QL sweep emits one run of rotations over descending adjacent
    // column pairs (hi, hi+1), (hi-1, hi), ..., (lo, lo+1).
    let mut runs: Vec<(u32, u32)> = Vec::new();
    let mut coeffs: Vec<(f64, f64)> = Vec::new();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERS {
                return Err(Error::NonConvergence {
                    what: "eig_sym QL iteration",
                    iterations: MAX_QL_ITERS,
                    residual: e[l].abs(),
                });
            }
            let g0 = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g0.hypot(1.0);
            let mut g = d[m] - d[l] + e[l] / (g0 + r.copysign(g0));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            let mut pushed = 0u32;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                coeffs.push((s, c));
                pushed += 1;
            }
            if pushed > 0 {
                let hi = (m - 1) as u32;
                runs.push((hi + 1 - pushed, hi));
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    replay_rotation_runs(z, &runs, &coeffs, n);
    Ok(())
}

/// Apply all buffered rotation runs to every row in one streaming pass.
///
/// Within a run, rotation `i` writes `row[i]` and rotation `i - 1` reads it,
/// so the shared value rides in a register and each element is loaded and
/// stored once per run. Four rows advance in lockstep to overlap FP latency.
/// The per-row arithmetic is identical to applying each rotation in place.
fn replay_rotation_runs(z: &mut [f64], runs: &[(u32, u32)], coeffs: &[(f64, f64)], n: usize) {
    const LANES: usize = 4;
    let mut chunks = z.chunks_exact_mut(LANES * n);
    for block in &mut chunks {
        let (r0, rest) = block.split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, r3) = rest.split_at_mut(n);
        let mut cursor = 0usize;
        for &(lo, hi) in runs {
            let (lo, hi) = (lo as usize, hi as usize);
            let mut f0 = r0[hi + 1];
            let mut f1 = r1[hi + 1];
            let mut f2 = r2[hi + 1];
            let mut f3 = r3[hi + 1];
            for (k, i) in (lo..=hi).rev().enumerate() {
                let (s, c) = coeffs[cursor + k];
                let x0 = r0[i];
                let x1 = r1[i];
                let x2 = r2[i];
                let x3 = r3[i];
                r0[i + 1] = s * x0 + c * f0;
                r1[i + 1] = s * x1 + c * f1;
                r2[i + 1] = s * x2 + c * f2;
                r3[i + 1] = s * x3 + c * f3;
                f0 = c * x0 - s * f0;
                f1 = c * x1 - s * f1;
                f2 = c * x2 - s * f2;
                f3 = c * x3 - s * f3;
            }
            r0[lo] = f0;
            r1[lo] = f1;
            r2[lo] = f2;
            r3[lo] = f3;
            cursor += hi - lo + 1;
        }
    }
    for row in chunks.into_remainder().chunks_mut(n) {
        let mut cursor = 0usize;
        for &(lo, hi) in runs {
            let (lo, hi) = (lo as usize, hi as usize);
            let mut f = row[hi + 1];
            for (k, i) in (lo..=hi).rev().enumerate() {
                let (s, c) = coeffs[cursor + k];
                let x = row[i];
                row[i + 1] = s * x + c * f;
                f = c * x - s * f;
            }
            row[lo] = f;
            cursor += hi - lo + 1;
        }
    }
}

fn sort_eigenpairs(z: Vec<f64>, d: Vec<f64>, n: usize) -> EigenDecomposition {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values: Vec<f64> = idx.iter().map(|&k| d[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let src = &z[i * n..(i + 1) * n];
        let dst = vectors.row_mut(i);
        for (k, &col) in idx.iter().enumerate() {
            dst[k] = src[col];
        }
    }
    EigenDecomposition { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Quadratic-formula oracle for symmetric 2x2 eigenvalues.
    fn eig2_oracle(a: f64, b: f64, d: f64) -> (f64, f64) {
        let mean = 0.5 * (a + d);
        let disc = (0.5 * (a - d)).hypot(b);
        (mean - disc, mean + disc)
    }

    /// Trigonometric closed form for symmetric 3x3 eigenvalues (independent
    /// of the iterative solver; uses only the characteristic polynomial).
    fn eig3_oracle(m: &SymmetricMatrix) -> [f64; 3] {
        let (a, b, c) = (m.get(0, 0), m.get(1, 1), m.get(2, 2));
        let (d, e, f) = (m.get(0, 1), m.get(1, 2), m.get(0, 2));
        let p1 = d * d + e * e + f * f;
        if p1 == 0.0 {
            let mut v = [a, b, c];
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return v;
        }
        let q = (a + b + c) / 3.0;
        let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let det_b = |m11: f64, m22: f64, m33: f64, m12: f64, m23: f64, m13: f64| {
            m11 * (m22 * m33 - m23 * m23) - m12 * (m12 * m33 - m23 * m13)
                + m13 * (m12 * m23 - m22 * m13)
        };
        let r = det_b(
            (a - q) / p,
            (b - q) / p,
            (c - q) / p,
            d / p,
            e / p,
            f / p,
        ) / 2.0;
        let phi = (r.clamp(-1.0, 1.0)).acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut v = [e1, e2, e3];
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v
    }

    fn check_contract(m: &SymmetricMatrix, eig: &EigenDecomposition) {
        let n = m.dim();
        // ascending
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1], "eigenvalues not ascending: {:?}", eig.values);
        }
        // reconstruction within 1e-10 * (1 + max-norm)
        let rec = eig.reconstruct();
        let err = rec.dense().sub(m.dense()).unwrap().max_abs();
        let tol = 1e-10 * (1.0 + m.dense().max_abs());
        assert!(err <= tol, "reconstruction error {} > {}", err, tol);
        // orthonormality within 1e-10
        let u = &eig.vectors;
        let utu = u.transpose().matmul(u).unwrap();
        let id = DenseMatrix::identity(n);
        let oerr = utu.sub(&id).unwrap().max_abs();
        assert!(oerr <= 1e-10, "U^T U deviates from I by {}", oerr);
    }

    #[test]
    fn two_by_two_hand_value() {
        let m = SymmetricMatrix::from_fn(2, |i, j| if i == j { 2.0 } else { 1.0 });
        let eig = eig_sym(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
        check_contract(&m, &eig);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = SymmetricMatrix::identity(5);
        let eig = eig_sym(&m).unwrap();
        for v in &eig.values {
            assert_eq!(*v, 1.0);
        }
        check_contract(&m, &eig);
    }

    #[test]
    fn diagonal_fast_path_sorts() {
        let m = SymmetricMatrix::from_fn(4, |i, j| {
            if i == j {
                [3.0, -1.0, 2.0, 0.5][i]
            } else {
                0.0
            }
        });
        let eig = eig_sym(&m).unwrap();
        assert_eq!(eig.values, vec![-1.0, 0.5, 2.0, 3.0]);
        check_contract(&m, &eig);
    }

    #[test]
    fn three_by_three_matches_characteristic_polynomial() {
        let fixtures = [
            [2.0, 0.4, -0.3, 1.5, 0.2, 1.0],
            [1.0, 0.9, 0.9, 1.0, 0.9, 1.0],
            [4.0, -1.0, 0.5, 3.0, 0.7, -2.0],
        ];
        for [a, d, f, b, e, c] in fixtures {
            let m = SymmetricMatrix::from_fn(3, |i, j| match (i, j) {
                (0, 0) => a,
                (1, 1) => b,
                (2, 2) => c,
                (0, 1) => d,
                (1, 2) => e,
                (0, 2) => f,
                _ => unreachable!(),
            });
            let eig = eig_sym(&m).unwrap();
            let oracle = eig3_oracle(&m);
            for (got, want) in eig.values.iter().zip(oracle) {
                assert!(
                    (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                    "eigenvalue {} vs oracle {}",
                    got,
                    want
                );
            }
            check_contract(&m, &eig);
        }
    }

    #[test]
    fn repeated_eigenvalues_stay_orthonormal() {
        // spectrum {1, 1, 4}: projector onto span{(1,1,1)} scaled plus identity
        let m = SymmetricMatrix::from_fn(3, |i, j| if i == j { 2.0 } else { 1.0 });
        let eig = eig_sym(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        assert!((eig.values[2] - 4.0).abs() < 1e-12);
        check_contract(&m, &eig);
    }

    #[test]
    fn moderate_dimension_contract() {
        // deterministic pseudo-random symmetric matrix, n = 40
        let n = 40;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let m = SymmetricMatrix::from_fn(n, |_, _| next());
        let eig = eig_sym(&m).unwrap();
        check_contract(&m, &eig);
    }

    #[test]
    fn recompose_inverse_of_spd() {
        let m = SymmetricMatrix::from_fn(3, |i, j| if i == j { 2.0 } else { 0.5 });
        let inv = m.inverse_spd().unwrap();
        let prod = m.dense().matmul(inv.dense()).unwrap();
        let err = prod.sub(&DenseMatrix::identity(3)).unwrap().max_abs();
        assert!(err < 1e-12, "M M^-1 deviates from I by {}", err);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn prop_two_by_two_oracle(a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
            let m = SymmetricMatrix::from_fn(2, |i, j| match (i, j) {
                (0, 0) => a,
                (1, 1) => d,
                _ => b,
            });
            let eig = eig_sym(&m).unwrap();
            let (lo, hi) = eig2_oracle(a, b, d);
            prop_assert!((eig.values[0] - lo).abs() <= 1e-10 * (1.0 + lo.abs()));
            prop_assert!((eig.values[1] - hi).abs() <= 1e-10 * (1.0 + hi.abs()));
        }

        #[test]
        fn prop_reconstruction_contract(
            dim in 1usize..8,
            entries in proptest::collection::vec(-4.0f64..4.0, 64),
        ) {
            let m = SymmetricMatrix::from_fn(dim, |i, j| entries[(i * 8 + j).min(63)]);
            let eig = eig_sym(&m).unwrap();
            let rec = eig.reconstruct();
            let err = rec.dense().sub(m.dense()).unwrap().max_abs();
            prop_assert!(err <= 1e-10 * (1.0 + m.dense().max_abs()));
            let utu = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
            let id = DenseMatrix::identity(dim);
            prop_assert!(utu.sub(&id).unwrap().max_abs() <= 1e-10);
        }

        #[test]
        fn prop_trace_is_eigenvalue_sum(
            dim in 2usize..7,
            entries in proptest::collection::vec(-3.0f64..3.0, 49),
        ) {
            let m = SymmetricMatrix::from_fn(dim, |i, j| entries[(i * 7 + j).min(48)]);
            let eig = eig_sym(&m).unwrap();
            let sum: f64 = eig.values.iter().sum();
            prop_assert!((sum - m.trace()).abs() <= 1e-9 * (1.0 + m.trace().abs()));
        }
    }
}
