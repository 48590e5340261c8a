//! Replicate designs.
//!
//! With N replicate observations the noise covariance stops being a
//! nuisance that only enters through its trace:
//!
//! * Case 1 (shared signal, `X_i = X_0 + W_i`): pairwise differences
//!   cancel the signal exactly, `W_tilde_i = X_{2i-1} - X_{2i}` has column
//!   covariance `2B`, so `B` is estimable directly and its inverse comes
//!   from a graphical Lasso. The replicate mean keeps the signal but
//!   shrinks the noise to `B / N`, which feeds the nodewise pipeline with
//!   an `N`-scaled trace correction and no signal-trace convention at all.
//! * Case 2 (independent signals): horizontal stacking multiplies the
//!   effective sample count for the row problem, vertical stacking for the
//!   column problem.

use crate::error::{dim_err, param_err, Error, Result};
use crate::gram::estimate_trace_b;
use crate::linalg::{dot, eig_sym, DenseMatrix, SymmetricMatrix};
use crate::model::{
    derive_seed, draw_noise, draw_signal, sample, stream_rng, CovarianceModel, EntryLaw,
    SubgaussianSpec,
};
use crate::precision::{
    estimate_theta_with_tau, EstimateOptions, LambdaRule, PrecisionEstimate,
};
use crate::solver::SolverConfig;

/// N observations of the same n x m panel.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub samples: Vec<DenseMatrix>,
    /// Case 1 (`true`): one signal shared by every replicate. Case 2
    /// (`false`): independent signals.
    pub shared_signal: bool,
    pub seed: u64,
    pub law: EntryLaw,
}

impl ReplicateSet {
    pub fn new(
        samples: Vec<DenseMatrix>,
        shared_signal: bool,
        seed: u64,
        law: EntryLaw,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(param_err("samples", "needs at least one replicate"));
        }
        let (n, m) = (samples[0].rows(), samples[0].cols());
        if samples.iter().any(|s| s.rows() != n || s.cols() != m) {
            return Err(dim_err("replicates", "samples must share one shape"));
        }
        Ok(ReplicateSet {
            samples,
            shared_signal,
            seed,
            law,
        })
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn n(&self) -> usize {
        self.samples[0].rows()
    }

    pub fn m(&self) -> usize {
        self.samples[0].cols()
    }

    /// Entrywise mean of all replicates.
    pub fn mean(&self) -> DenseMatrix {
        let (n, m) = (self.n(), self.m());
        let mut acc = DenseMatrix::zeros(n, m);
        for s in &self.samples {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *a += b;
            }
        }
        let inv = 1.0 / self.count() as f64;
        for a in acc.as_mut_slice() {
            *a *= inv;
        }
        acc
    }
}

/// Draw N replicates. Case 1 draws the signal once (stream 0) and one noise
/// panel per replicate (streams 1..=N); Case 2 draws N fully independent
/// samples under per-replicate derived seeds.
pub fn sample_replicates(
    model: &CovarianceModel,
    spec: SubgaussianSpec,
    count: usize,
    shared_signal: bool,
    seed: u64,
) -> Result<ReplicateSet> {
    if count < 1 {
        return Err(param_err("count", "needs at least one replicate"));
    }
    let mut samples = Vec::with_capacity(count);
    if shared_signal {
        let x0 = draw_signal(model, spec.law, &mut stream_rng(seed, 0))?;
        for i in 0..count {
            let w = draw_noise(model, spec.law, &mut stream_rng(seed, 1 + i as u64))?;
            samples.push(x0.add(&w)?);
        }
    } else {
        for i in 0..count {
            samples.push(sample(model, spec, derive_seed(seed, 2, i as u64))?.x);
        }
    }
    ReplicateSet::new(samples, shared_signal, seed, spec.law)
}

/// Signal-free difference panels from consecutive pairs.
#[derive(Debug, Clone)]
pub struct PairDifferences {
    /// `W_tilde_i = X_{2i-1} - X_{2i}`, each with column covariance `2B`.
    pub diffs: Vec<DenseMatrix>,
    /// Set when an odd trailing replicate was discarded.
    pub dropped_last: bool,
}

/// Difference consecutive replicate pairs; Case 1 only. An odd final
/// replicate is dropped and flagged rather than rejected.
pub fn pair_differences(reps: &ReplicateSet) -> Result<PairDifferences> {
    if !reps.shared_signal {
        return Err(param_err(
            "reps",
            "differencing needs a shared signal to cancel",
        ));
    }
    if reps.count() < 2 {
        return Err(param_err("reps", "needs at least two replicates to pair"));
    }
    let pairs = reps.count() / 2;
    let mut diffs = Vec::with_capacity(pairs);
    for i in 0..pairs {
        diffs.push(reps.samples[2 * i].sub(&reps.samples[2 * i + 1])?);
    }
    Ok(PairDifferences {
        diffs,
        dropped_last: reps.count() % 2 == 1,
    })
}

/// `B_tilde = sum_i W_tilde_i W_tilde_i^T / (N m)` with `N` the number of
/// replicates consumed (twice the pair count). Unbiased for `B`: each of
/// the `N/2` terms has expectation `2 m B`. PSD by construction.
pub fn estimate_b_tilde(diffs: &[DenseMatrix]) -> Result<SymmetricMatrix> {
    if diffs.is_empty() {
        return Err(param_err("diffs", "needs at least one difference panel"));
    }
    let (n, m) = (diffs[0].rows(), diffs[0].cols());
    if diffs.iter().any(|d| d.rows() != n || d.cols() != m) {
        return Err(dim_err("estimate_b_tilde", "panels must share one shape"));
    }
    let scale = 1.0 / (2.0 * diffs.len() as f64 * m as f64);
    let mut acc = SymmetricMatrix::zeros(n);
    for d in diffs {
        for i in 0..n {
            let ri = d.row(i);
            for j in i..n {
                let v = acc.get(i, j) + scale * dot(ri, d.row(j));
                acc.set_sym(i, j, v);
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct GlassoConfig {
    /// Off-diagonal l1 penalty, `>= 0`. Zero requires an SPD input.
    pub rho: f64,
    pub max_sweeps: usize,
    /// Bound on the optimality residual of the returned estimate, measured
    /// by [`glasso_kkt_residual`].
    pub tol: f64,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        GlassoConfig {
            rho: 0.1,
            max_sweeps: 500,
            tol: 1e-7,
        }
    }
}

/// Penalty matched to the replicate error rate `sqrt(log n / (N m))`.
pub fn default_glasso_rho(n: usize, count: usize, m: usize) -> f64 {
    2.0 * ((n as f64).ln().max(0.0) / (count as f64 * m as f64)).sqrt()
}

/// Optimality residual of a candidate inverse-covariance `phi` for the
/// off-diagonal-penalized likelihood: with `W = phi^{-1}`,
///
/// * diagonal: `|W_jj - S_jj|` (the unpenalized diagonal is exact at the
///   optimum),
/// * active off-diagonals: `|W_ij - S_ij - rho sign(phi_ij)|`,
/// * zero off-diagonals: the excess `|W_ij - S_ij| - rho`, if positive.
pub fn glasso_kkt_residual(
    s: &SymmetricMatrix,
    phi: &SymmetricMatrix,
    rho: f64,
) -> Result<f64> {
    let dim = s.dim();
    if phi.dim() != dim {
        return Err(dim_err("glasso_kkt_residual", "phi and S dimensions differ"));
    }
    let w = phi.inverse_spd()?;
    let mut resid = 0.0f64;
    for i in 0..dim {
        resid = resid.max((w.get(i, i) - s.get(i, i)).abs());
        for j in i + 1..dim {
            let gap = w.get(i, j) - s.get(i, j);
            let p = phi.get(i, j);
            let r = if p != 0.0 {
                (gap - rho * p.signum()).abs()
            } else {
                (gap.abs() - rho).max(0.0)
            };
            resid = resid.max(r);
        }
    }
    Ok(resid)
}

/// Coordinate descent for
/// `min_beta 0.5 beta' W11 beta - s12' beta + rho ||beta||_1`,
/// warm-started in place.
fn glasso_column(w11: &SymmetricMatrix, s12: &[f64], rho: f64, beta: &mut [f64]) {
    let p = s12.len();
    for _ in 0..200 {
        let mut max_step = 0.0f64;
        for k in 0..p {
            let mut r = s12[k];
            for l in 0..p {
                if l != k {
                    r -= w11.get(k, l) * beta[l];
                }
            }
            let new = crate::linalg::soft_threshold_scalar(r, rho) / w11.get(k, k);
            max_step = max_step.max((new - beta[k]).abs());
            beta[k] = new;
        }
        if max_step <= 1e-12 {
            break;
        }
    }
}

/// Graphical Lasso with the penalty on off-diagonal entries only:
/// maximize `log det(phi) - tr(S phi) - rho sum_{i != j} |phi_ij|` by block
/// coordinate descent on the working covariance. Convergence is declared
/// on the measured optimality residual of the assembled estimate, so a
/// returned matrix always satisfies `glasso_kkt_residual <= tol`.
pub fn glasso(s: &SymmetricMatrix, config: &GlassoConfig) -> Result<SymmetricMatrix> {
    let dim = s.dim();
    if !(config.rho.is_finite() && config.rho >= 0.0) {
        return Err(param_err(
            "rho",
            format!("{} is not finite and >= 0", config.rho),
        ));
    }
    if !(config.tol > 0.0) {
        return Err(param_err("tol", "must be positive"));
    }
    for j in 0..dim {
        if !(s.get(j, j) > 0.0) {
            return Err(param_err(
                "s",
                format!("diagonal entry {} is {}, not positive", j, s.get(j, j)),
            ));
        }
    }
    if config.rho == 0.0 {
        // unpenalized MLE: the stationarity condition is exactly W = S
        let eig = eig_sym(s)?;
        let floor = 1e-10 * eig.lambda_max().max(0.0);
        if eig.lambda_min() <= floor {
            return Err(Error::NotPositiveDefinite {
                lambda_min: eig.lambda_min(),
                floor,
            });
        }
        return s.inverse_spd();
    }
    if dim == 1 {
        return Ok(SymmetricMatrix::from_fn(1, |_, _| 1.0 / s.get(0, 0)));
    }
    let mut w = s.clone();
    let mut betas = vec![vec![0.0f64; dim - 1]; dim];
    let mut last_resid = f64::INFINITY;
    for sweep in 1..=config.max_sweeps {
        for j in 0..dim {
            let w11 = w.minor_excluding(j)?;
            let s12 = s.column_excluding(j)?;
            glasso_column(&w11, &s12, config.rho, &mut betas[j]);
            let w12 = w11.matvec(&betas[j])?;
            let mut ki = 0;
            for i in 0..dim {
                if i != j {
                    w.set_sym(i, j, w12[ki]);
                    ki += 1;
                }
            }
        }
        // assemble the precision candidate from the working covariance
        let mut phi = DenseMatrix::zeros(dim, dim);
        let mut degenerate = false;
        for j in 0..dim {
            let w12 = w.column_excluding(j)?;
            let denom = w.get(j, j) - dot(&w12, &betas[j]);
            if !(denom > 0.0) {
                degenerate = true;
                break;
            }
            let pjj = 1.0 / denom;
            phi.set(j, j, pjj);
            let mut ki = 0;
            for i in 0..dim {
                if i != j {
                    phi.set(j, i, -pjj * betas[j][ki]);
                    ki += 1;
                }
            }
        }
        if degenerate {
            continue;
        }
        let phi = SymmetricMatrix::symmetrized(&phi)?;
        if eig_sym(&phi)?.lambda_min() <= 0.0 {
            continue;
        }
        last_resid = glasso_kkt_residual(s, &phi, config.rho)?;
        if last_resid <= config.tol {
            return Ok(phi);
        }
        let _ = sweep;
    }
    Err(Error::NonConvergence {
        what: "glasso",
        iterations: config.max_sweeps,
        residual: last_resid,
    })
}

/// Case-1 row-precision pipeline: difference pairs, average their outer
/// products into `B_tilde`, invert sparsely by graphical Lasso.
pub fn estimate_phi_replicates(
    reps: &ReplicateSet,
    config: &GlassoConfig,
) -> Result<SymmetricMatrix> {
    let pd = pair_differences(reps)?;
    let b_tilde = estimate_b_tilde(&pd.diffs)?;
    glasso(&b_tilde, config)
}

/// Case-1 column-precision pipeline on the replicate mean: the mean keeps
/// the signal covariance but shrinks the noise to `B / N`, so the usual
/// assembly runs with correction `tr(B_tilde) / (n N)`. No signal-trace
/// convention is needed; `B_tilde` carries the noise scale.
pub fn estimate_theta_replicates(
    reps: &ReplicateSet,
    b_tilde: &SymmetricMatrix,
    rule: &LambdaRule,
    b1: f64,
    config: &SolverConfig,
) -> Result<PrecisionEstimate> {
    if !reps.shared_signal {
        return Err(param_err(
            "reps",
            "the mean-response pipeline needs a shared signal",
        ));
    }
    if b_tilde.dim() != reps.n() {
        return Err(dim_err(
            "estimate_theta_replicates",
            format!("b_tilde is {}x{0}, data rows {}", b_tilde.dim(), reps.n()),
        ));
    }
    let tau = b_tilde.trace() / (reps.n() as f64 * reps.count() as f64);
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(param_err("b_tilde", "trace must be finite and >= 0"));
    }
    estimate_theta_with_tau(
        &reps.mean(),
        tau,
        rule,
        b1,
        config,
        &EstimateOptions::default(),
    )
}

/// Case-2 stacks: `X_tilde = [X_1, ..., X_N]` horizontal (n x Nm) for the
/// row problem, `X_ddot = [X_1; ...; X_N]` vertical (Nn x m) for the column
/// problem.
pub fn stack_case2(reps: &ReplicateSet) -> Result<(DenseMatrix, DenseMatrix)> {
    if reps.shared_signal {
        return Err(param_err(
            "reps",
            "stacking treats replicates as independent samples",
        ));
    }
    let (n, m, count) = (reps.n(), reps.m(), reps.count());
    let mut wide = DenseMatrix::zeros(n, count * m);
    let mut tall = DenseMatrix::zeros(count * n, m);
    for (i, s) in reps.samples.iter().enumerate() {
        for r in 0..n {
            wide.row_mut(r)[i * m..(i + 1) * m].copy_from_slice(s.row(r));
            tall.row_mut(i * n + r).copy_from_slice(s.row(r));
        }
    }
    Ok((wide, tall))
}

/// Convenience for comparing against the single-sample pipeline: the noise
/// trace estimated from the replicate mean directly, using the signal-trace
/// convention instead of `B_tilde`.
pub fn mean_trace_correction(reps: &ReplicateSet, tr_a: f64) -> Result<f64> {
    let (_, tau) = estimate_trace_b(&reps.mean(), tr_a)?;
    Ok(tau)
}
