//! Full precision-matrix pipeline.
//!
//! For each column `j`: solve the corrected Lasso on the nodewise inputs,
//! then assemble row `j` of the asymmetric estimate through the partial
//! correlation identities
//!
//! ```text
//! theta_tilde[j][j]  = 1 / (Gamma_hat[j][j] - <Gamma_hat[j][-j], beta_j>)
//! theta_tilde[j][-j] = -theta_tilde[j][j] * beta_j
//! ```
//!
//! then symmetrize and, if needed, repair to positive semidefinite by
//! eigenvalue clamping (costs at most a 3x error inflation). The row
//! precision matrix comes through the same code path applied to the
//! transposed data, where the trace convention makes the noise level
//! exactly 1 instead of estimated.

use rayon::prelude::*;

use crate::error::{dim_err, param_err, Error, Result};
use crate::gram::{corrected_gram, estimate_trace_b, nodewise_from_gram, CorrectedGram};
use crate::linalg::{
    dot, eig_sym, l1_norm, l2_norm, DenseMatrix, SymmetricMatrix,
};
use crate::model::{stream_rng, CovarianceModel};
use crate::solver::{auto_eta, solve_lasso, LassoProblem, LassoSolution, SolverConfig};

use rand::Rng;

/// Columns whose assembled diagonal would fall at or below this are treated
/// as degenerate.
pub const DIAG_FLOOR: f64 = 1e-6;

/// Penalty selection for the nodewise regressions.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    /// One value for every column (zero allowed: the l1 ball alone can
    /// regularize).
    Fixed(f64),
    /// Explicit per-column values.
    PerColumn(Vec<f64>),
    /// Theory rule evaluated on ground-truth model quantities.
    Oracle { c0: f64, k: f64 },
    /// Theory rule with clamped empirical surrogates for the unobservables.
    Plugin { c0: f64, k: f64 },
    /// Cross-validated pick from a log grid centered on the plugin value.
    Grid { c0: f64, k: f64 },
}

impl LambdaRule {
    pub fn oracle() -> Self {
        LambdaRule::Oracle { c0: 1.0, k: 2.0 }
    }

    pub fn plugin() -> Self {
        LambdaRule::Plugin { c0: 1.0, k: 2.0 }
    }

    pub fn grid() -> Self {
        LambdaRule::Grid { c0: 1.0, k: 2.0 }
    }
}

/// Everything a rule might need; only the pieces the chosen mode uses must
/// be present.
pub struct LambdaContext<'a> {
    pub gram: &'a CorrectedGram,
    /// Raw data, required by the grid rule's cross-validation.
    pub x: Option<&'a DenseMatrix>,
    /// Ground truth, required by the oracle rule.
    pub model: Option<&'a CovarianceModel>,
    /// Ball radius used during grid cross-validation solves.
    pub b1: f64,
    pub solver: &'a SolverConfig,
}

/// The shared penalty template:
/// `4 c0 K^2 D0' (tau_half ||beta||_2 + sigma_v) sqrt(log m / n)`.
pub fn lambda_from_parts(
    c0: f64,
    k: f64,
    d0_prime: f64,
    tau_half: f64,
    beta_l2: f64,
    sigma_v: f64,
    log_m_over_n: f64,
) -> f64 {
    4.0 * c0 * k * k * d0_prime * (tau_half * beta_l2 + sigma_v) * log_m_over_n.sqrt()
}

fn log_ratio(gram: &CorrectedGram) -> f64 {
    let (n, m) = gram.source_dims;
    (m as f64).ln() / n as f64
}

fn oracle_lambdas(c0: f64, k: f64, model: &CovarianceModel, gram: &CorrectedGram) -> Result<Vec<f64>> {
    let m = gram.m();
    if model.m() != m {
        return Err(dim_err(
            "resolve_lambda",
            format!("model has {} columns, data {}", model.m(), m),
        ));
    }
    let b_op = model.b_op_norm();
    let d0_prime = b_op.sqrt() + model.a_max_diag().sqrt();
    let d_oracle = 2.0 * (model.a_lambda_max().sqrt() + b_op.sqrt());
    let tau_half = model.tau_b().sqrt() + d_oracle / (m as f64).sqrt();
    let lr = log_ratio(gram);
    (0..m)
        .map(|j| {
            let (beta, sigma2) = model.population_regression(j)?;
            Ok(lambda_from_parts(
                c0,
                k,
                d0_prime,
                tau_half,
                l2_norm(&beta),
                sigma2.sqrt(),
                lr,
            ))
        })
        .collect()
}

fn plugin_lambdas(c0: f64, k: f64, gram: &CorrectedGram) -> Vec<f64> {
    let m = gram.m();
    let tau = gram.tau_b_hat;
    let a_max_hat = gram
        .gamma_hat
        .diag()
        .into_iter()
        .fold(f64::MIN, f64::max)
        .max(1.0);
    let d0_prime = tau.sqrt() + a_max_hat.sqrt();
    let tau_half = tau.sqrt() + 2.0 * (a_max_hat.sqrt() + tau.sqrt()) / (m as f64).sqrt();
    let beta_l2 = a_max_hat.sqrt();
    let lr = log_ratio(gram);
    (0..m)
        .map(|j| {
            let sigma_v = gram.gamma_hat.get(j, j).max(0.1).sqrt();
            lambda_from_parts(c0, k, d0_prime, tau_half, beta_l2, sigma_v, lr)
        })
        .collect()
}

/// Contiguous row blocks for cross-validation: block `f` of `folds`.
fn fold_bounds(n: usize, folds: usize, f: usize) -> (usize, usize) {
    let lo = n * f / folds;
    let hi = n * (f + 1) / folds;
    (lo, hi)
}

fn grid_lambdas(
    c0: f64,
    k: f64,
    gram: &CorrectedGram,
    x: &DenseMatrix,
    b1: f64,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    const POINTS: usize = 10;
    const FOLDS: usize = 5;
    let (n, m) = gram.source_dims;
    if n < 2 * FOLDS {
        return Err(param_err(
            "x",
            format!("{} rows is too few for {}-fold validation", n, FOLDS),
        ));
    }
    let centers = plugin_lambdas(c0, k, gram);
    let tau = gram.tau_b_hat;
    // Train-side corrected Grams, one per fold, shared across columns.
    let mut train_grams = Vec::with_capacity(FOLDS);
    let mut val_rows: Vec<(usize, usize)> = Vec::with_capacity(FOLDS);
    for f in 0..FOLDS {
        let (lo, hi) = fold_bounds(n, FOLDS, f);
        let mut rows = Vec::with_capacity(n - (hi - lo));
        for r in (0..n).filter(|r| *r < lo || *r >= hi) {
            rows.push(x.row(r).to_vec());
        }
        let x_train = DenseMatrix::from_rows(&rows)?;
        train_grams.push(corrected_gram(&x_train, tau)?);
        val_rows.push((lo, hi));
    }
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let lo_lambda = centers[j] / 10.0;
        let grid: Vec<f64> = (0..POINTS)
            .map(|i| lo_lambda * 100f64.powf(i as f64 / (POINTS - 1) as f64))
            .collect();
        let mut best = (f64::INFINITY, grid[0]);
        for &lambda in &grid {
            let mut score = 0.0;
            for f in 0..FOLDS {
                let ni = nodewise_from_gram(&train_grams[f], j)?;
                let problem = LassoProblem {
                    gram: ni.gamma_j,
                    target: ni.gamma_vec_j,
                    lambda,
                    b1,
                };
                let sol = solve_lasso(&problem, solver)?;
                let (lo, hi) = val_rows[f];
                let mut resid_sq = 0.0;
                for r in lo..hi {
                    let row = x.row(r);
                    let mut pred = 0.0;
                    let mut ki = 0;
                    for (kcol, &v) in row.iter().enumerate() {
                        if kcol != j {
                            pred += v * sol.beta[ki];
                            ki += 1;
                        }
                    }
                    let d = row[j] - pred;
                    resid_sq += d * d;
                }
                let beta_sq = dot(&sol.beta, &sol.beta);
                score += resid_sq / (hi - lo) as f64 - tau * beta_sq;
            }
            if score < best.0 {
                best = (score, lambda);
            }
        }
        out.push(best.1);
    }
    Ok(out)
}

/// Resolve the penalty rule to one value per column.
pub fn resolve_lambda(rule: &LambdaRule, ctx: &LambdaContext) -> Result<Vec<f64>> {
    let m = ctx.gram.m();
    match rule {
        LambdaRule::Fixed(v) => {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(param_err(
                    "lambda",
                    format!("{} is not finite and >= 0", v),
                ));
            }
            Ok(vec![*v; m])
        }
        LambdaRule::PerColumn(vs) => {
            if vs.len() != m {
                return Err(dim_err(
                    "resolve_lambda",
                    format!("{} values for {} columns", vs.len(), m),
                ));
            }
            if !vs.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(param_err("lambda", "values must be finite and >= 0"));
            }
            Ok(vs.clone())
        }
        LambdaRule::Oracle { c0, k } => {
            let model = ctx.model.ok_or_else(|| {
                param_err("model", "the oracle rule needs ground-truth model quantities")
            })?;
            oracle_lambdas(*c0, *k, model, ctx.gram)
        }
        LambdaRule::Plugin { c0, k } => Ok(plugin_lambdas(*c0, *k, ctx.gram)),
        LambdaRule::Grid { c0, k } => {
            let x = ctx.x.ok_or_else(|| {
                param_err("x", "the grid rule needs the data for cross-validation")
            })?;
            grid_lambdas(*c0, *k, ctx.gram, x, ctx.b1, ctx.solver)
        }
    }
}

/// Ball radius for oracle runs: `1.1 * max_j ||beta_j*||_1`.
pub fn oracle_b1(model: &CovarianceModel) -> f64 {
    1.1 * model.max_beta_l1()
}

/// Data-driven default ball radius: twice the largest l1 norm among ridge
/// pre-solves of the nodewise regressions. All m ridge solutions come from
/// one SPD inverse of `Gamma_hat + kappa I` through the block identity
/// `beta_j = -(M^-1)[-j][j] / (M^-1)[j][j]`; the shift `kappa` absorbs any
/// negative eigenvalues so the inverse exists.
pub fn ridge_b1(gram: &CorrectedGram) -> Result<f64> {
    let m = gram.m();
    let eig = eig_sym(&gram.gamma_hat)?;
    let mean_diag = gram.gamma_hat.trace() / m as f64;
    let kappa = 0.05 * mean_diag.max(0.0) + 1.1 * (-eig.lambda_min()).max(0.0) + 1e-8;
    let shifted = SymmetricMatrix::from_fn(m, |i, j| {
        gram.gamma_hat.get(i, j) + if i == j { kappa } else { 0.0 }
    });
    let inv = shifted.inverse_spd()?;
    let mut worst = 0.0f64;
    for j in 0..m {
        let djj = inv.get(j, j);
        let mut l1 = 0.0;
        for i in 0..m {
            if i != j {
                l1 += (inv.get(i, j) / djj).abs();
            }
        }
        worst = worst.max(l1);
    }
    Ok((2.0 * worst).max(DIAG_FLOOR))
}

/// Assembly and repair knobs that are not solver concerns.
#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    /// Clamp degenerate assembled diagonals to [`DIAG_FLOOR`] instead of
    /// erroring. For exploratory runs only.
    pub clamp_degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    /// Row-wise assembled estimate, generally asymmetric.
    pub theta_tilde: DenseMatrix,
    /// Symmetrized estimate `(theta_tilde + theta_tilde^T) / 2`.
    pub theta_hat: SymmetricMatrix,
    /// PSD-repaired estimate; bit-identical to `theta_hat` when no repair
    /// was needed.
    pub theta_psd: SymmetricMatrix,
    pub per_column: Vec<LassoSolution>,
    pub lambda_used: Vec<f64>,
    pub repair_triggered: bool,
}

/// `(M + M^T) / 2`: the symmetric matrix closest to `M` in Frobenius norm,
/// and an entrywise-l1 minimizer (each off-diagonal pair moves to its
/// midpoint).
pub fn symmetrize(theta_tilde: &DenseMatrix) -> Result<SymmetricMatrix> {
    SymmetricMatrix::symmetrized(theta_tilde)
}

/// Eigenvalue clamp `U max(D, eps) U^T`. PSD inputs come back unchanged.
/// The default `eps = -lambda_min` mirrors the smallest eigenvalue across
/// zero; an explicit `eps` must lie in `(0, -lambda_min]`, which keeps the
/// repaired estimate within 3x of the unrepaired error against any true
/// PSD matrix.
pub fn psd_repair(theta_hat: &SymmetricMatrix, epsilon: Option<f64>) -> Result<SymmetricMatrix> {
    let eig = eig_sym(theta_hat)?;
    let lmin = eig.lambda_min();
    if lmin >= 0.0 {
        return Ok(theta_hat.clone());
    }
    let eps = match epsilon {
        None => -lmin,
        Some(e) => {
            if !(e > 0.0 && e <= -lmin) {
                return Err(param_err(
                    "epsilon",
                    format!("{} is outside (0, {}]", e, -lmin),
                ));
            }
            e
        }
    };
    Ok(eig.recompose(|l| l.max(eps)))
}

struct ColumnFit {
    solution: LassoSolution,
    theta_jj: f64,
}

fn fit_column(
    gram: &CorrectedGram,
    j: usize,
    lambda: f64,
    b1: f64,
    config: &SolverConfig,
    clamp_degenerate: bool,
) -> Result<ColumnFit> {
    let ni = nodewise_from_gram(gram, j)?;
    let problem = LassoProblem {
        gram: ni.gamma_j,
        target: ni.gamma_vec_j,
        lambda,
        b1,
    };
    let solution = solve_lasso(&problem, config)?;
    let denom = gram.gamma_hat.get(j, j) - dot(&problem.target, &solution.beta);
    let denom = if denom > DIAG_FLOOR {
        denom
    } else if clamp_degenerate {
        DIAG_FLOOR
    } else {
        return Err(Error::DegenerateDiagonal {
            column: j,
            value: denom,
            floor: DIAG_FLOOR,
        });
    };
    Ok(ColumnFit {
        solution,
        theta_jj: 1.0 / denom,
    })
}

/// The pipeline from an already-corrected Gram: resolve penalties, solve the
/// m nodewise problems (order-independent parallel map), assemble, then
/// symmetrize and repair. `x` is only needed by the grid penalty rule.
pub fn estimate_from_gram(
    gram: &CorrectedGram,
    x: Option<&DenseMatrix>,
    rule: &LambdaRule,
    b1: f64,
    config: &SolverConfig,
    opts: &EstimateOptions,
) -> Result<PrecisionEstimate> {
    let m = gram.m();
    if m < 2 {
        return Err(dim_err("estimate", "needs at least 2 columns"));
    }
    let lambdas = resolve_lambda(
        rule,
        &LambdaContext {
            gram,
            x,
            model: None,
            b1,
            solver: config,
        },
    )?;
    // One curvature bound serves every column: eigenvalue interlacing makes
    // the full-matrix value an upper bound for each principal submatrix.
    let shared_eta = match config.eta {
        Some(e) => e,
        None => auto_eta(&gram.gamma_hat)?,
    };
    let column_config = SolverConfig {
        eta: Some(shared_eta),
        ..config.clone()
    };
    let fits: Vec<ColumnFit> = (0..m)
        .into_par_iter()
        .map(|j| {
            fit_column(
                gram,
                j,
                lambdas[j],
                b1,
                &column_config,
                opts.clamp_degenerate,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut theta_tilde = DenseMatrix::zeros(m, m);
    for (j, fit) in fits.iter().enumerate() {
        let row = theta_tilde.row_mut(j);
        row[j] = fit.theta_jj;
        let mut ki = 0;
        for k in 0..m {
            if k != j {
                row[k] = -fit.theta_jj * fit.solution.beta[ki];
                ki += 1;
            }
        }
    }
    let theta_hat = symmetrize(&theta_tilde)?;
    let eig = eig_sym(&theta_hat)?;
    let repair_triggered = eig.lambda_min() < 0.0;
    let theta_psd = if repair_triggered {
        let eps = -eig.lambda_min();
        eig.recompose(|l| l.max(eps))
    } else {
        theta_hat.clone()
    };
    Ok(PrecisionEstimate {
        theta_tilde,
        theta_hat,
        theta_psd,
        per_column: fits.into_iter().map(|f| f.solution).collect(),
        lambda_used: lambdas,
        repair_triggered,
    })
}

/// Column-precision estimate with an explicitly known noise level. The core
/// entry point: the transpose pathway and the replicate-average pipeline
/// reuse it with their own `tau` sources.
pub fn estimate_theta_with_tau(
    x: &DenseMatrix,
    tau_b_hat: f64,
    rule: &LambdaRule,
    b1: f64,
    config: &SolverConfig,
    opts: &EstimateOptions,
) -> Result<PrecisionEstimate> {
    let gram = corrected_gram(x, tau_b_hat)?;
    estimate_from_gram(&gram, Some(x), rule, b1, config, opts)
}

/// Column-precision estimate with the noise level estimated from the trace
/// convention `tr(A) = tr_a`.
pub fn estimate_theta(
    x: &DenseMatrix,
    tr_a: f64,
    rule: &LambdaRule,
    b1: f64,
    config: &SolverConfig,
) -> Result<PrecisionEstimate> {
    let (_, tau) = estimate_trace_b(x, tr_a)?;
    estimate_theta_with_tau(x, tau, rule, b1, config, &EstimateOptions::default())
}

/// Row-precision estimate: identical machinery on the transposed data. The
/// trace convention fixes the transposed problem's noise level at exactly 1,
/// so no clamped estimator is involved.
pub fn estimate_phi(
    x: &DenseMatrix,
    rule: &LambdaRule,
    b1: f64,
    config: &SolverConfig,
) -> Result<PrecisionEstimate> {
    estimate_theta_with_tau(
        &x.transpose(),
        1.0,
        rule,
        b1,
        config,
        &EstimateOptions::default(),
    )
}

fn for_each_support(dim: usize, d: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        visit(&idx);
        // advance the lexicographically smallest combination
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + dim - d {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for k in i + 1..d {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// Extreme eigenvalues over all principal submatrices with `d` rows: the
/// largest and smallest Rayleigh quotients among `d`-sparse directions.
/// Exhaustive, so the dimension is capped at 20.
pub fn sparse_eigenvalues(m: &SymmetricMatrix, d: usize) -> Result<(f64, f64)> {
    let dim = m.dim();
    if dim > 20 {
        return Err(dim_err(
            "sparse_eigenvalues",
            format!(
                "exhaustive support enumeration is capped at 20, got {}; use probe_lower_re for randomized evidence",
                dim
            ),
        ));
    }
    if d < 1 || d > dim {
        return Err(param_err(
            "d",
            format!("{} is outside 1..={}", d, dim),
        ));
    }
    let mut rho_max = f64::NEG_INFINITY;
    let mut rho_min = f64::INFINITY;
    let mut result: Result<()> = Ok(());
    for_each_support(dim, d, |support| {
        if result.is_err() {
            return;
        }
        match m
            .principal_submatrix(support)
            .and_then(|sub| eig_sym(&sub))
        {
            Ok(eig) => {
                rho_max = rho_max.max(eig.lambda_max());
                rho_min = rho_min.min(eig.lambda_min());
            }
            Err(e) => result = Err(e),
        }
    });
    result?;
    Ok((rho_max, rho_min))
}

/// Largest support size `s` whose sparse-eigenvalue curvature stays inside
/// the sample-size budget:
/// `sqrt(s) (rho_max(s, A) + tau_B) <= lambda_min(A) / (32 C) * sqrt(n / log m)`.
/// Returns 0 when even `s = 1` fails; never exceeds `min(dim, m)`.
pub fn compute_s0(a: &SymmetricMatrix, tau_b: f64, n: usize, m: usize, c: f64) -> Result<usize> {
    if !(c > 0.0) {
        return Err(param_err("c", format!("{} is not > 0", c)));
    }
    if !(tau_b >= 0.0) {
        return Err(param_err("tau_b", format!("{} is not >= 0", tau_b)));
    }
    if m < 2 {
        return Err(param_err("m", "needs m >= 2 for a nonzero log factor"));
    }
    if n < 1 {
        return Err(param_err("n", "needs n >= 1"));
    }
    let eig = eig_sym(a)?;
    if !(eig.lambda_min() > 0.0) {
        return Err(Error::NotPositiveDefinite {
            lambda_min: eig.lambda_min(),
            floor: 0.0,
        });
    }
    let budget = eig.lambda_min() / (32.0 * c) * (n as f64 / (m as f64).ln()).sqrt();
    let mut s0 = 0;
    for s in 1..=a.dim().min(m) {
        let (rho_max, _) = sparse_eigenvalues(a, s)?;
        if (s as f64).sqrt() * (rho_max + tau_b) <= budget {
            s0 = s;
        }
    }
    Ok(s0)
}

/// One direction that broke the curvature bound.
#[derive(Debug, Clone)]
pub struct ReViolation {
    pub trial: usize,
    pub quadratic_form: f64,
    pub bound: f64,
}

/// Outcome of randomized curvature probing. A clean report (no violations)
/// is evidence for the restricted-eigenvalue-type bound, not a proof:
/// certifying it exactly is NP-hard, so only sampled directions are checked.
#[derive(Debug, Clone)]
pub struct ReProbeReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest value of `theta' Gamma theta - (alpha ||theta||_2^2 -
    /// tau ||theta||_1^2)` seen; negative means a violation was found.
    pub worst_margin: f64,
    pub first_violation: Option<ReViolation>,
}

impl ReProbeReport {
    pub fn clean(&self) -> bool {
        self.violations == 0
    }
}

/// Test `theta' Gamma theta >= alpha ||theta||_2^2 - tau ||theta||_1^2` on
/// random directions: alternating sparse supports (uniform size, gaussian
/// entries) and dense gaussian vectors.
pub fn probe_lower_re(
    gamma: &SymmetricMatrix,
    alpha: f64,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<ReProbeReport> {
    if trials < 1 {
        return Err(param_err("trials", "needs at least one trial"));
    }
    let dim = gamma.dim();
    let mut rng = stream_rng(seed, 3);
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    let mut first_violation = None;
    for trial in 0..trials {
        let mut theta = vec![0.0f64; dim];
        if trial % 2 == 0 {
            let s = rng.gen_range(1..=dim);
            for _ in 0..s {
                let i = rng.gen_range(0..dim);
                theta[i] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        } else {
            for t in theta.iter_mut() {
                *t = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        let quad = dot(&theta, &gamma.matvec(&theta)?);
        let l2_sq = dot(&theta, &theta);
        let l1 = l1_norm(&theta);
        let bound = alpha * l2_sq - tau * l1 * l1;
        let margin = quad - bound;
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            violations += 1;
            if first_violation.is_none() {
                first_violation = Some(ReViolation {
                    trial,
                    quadratic_form: quad,
                    bound,
                });
            }
        }
    }
    Ok(ReProbeReport {
        trials,
        violations,
        worst_margin,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ar1_covariance, build_model, random_spd, sample, EntryLaw, NoiseCov, SubgaussianSpec,
    };

    fn gram_from_matrix(a: &SymmetricMatrix, n: usize) -> CorrectedGram {
        CorrectedGram {
            tr_b_hat: 0.0,
            tau_b_hat: 0.0,
            gamma_hat: a.clone(),
            source_dims: (n, a.dim()),
        }
    }

    #[test]
    fn lambda_template_hand_value() {
        // B = 0, A = I, K = 1, C0 = 1, log m / n = 1:
        // D0' = 1, the tau_half term is killed by ||beta*||_2 = 0, sigma = 1
        let v = lambda_from_parts(1.0, 1.0, 1.0, 2.0, 0.0, 1.0, 1.0);
        assert_eq!(v, 4.0);
    }

    #[test]
    fn oracle_lambda_matches_direct_formula() {
        let a = ar1_covariance(4, 0.5).unwrap();
        let model = build_model(a, NoiseCov::scaled_identity(80, 0.3).unwrap(), false).unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 2).unwrap();
        let (_, tau) = estimate_trace_b(&s.x, 4.0).unwrap();
        let gram = corrected_gram(&s.x, tau).unwrap();
        let cfg = SolverConfig::default();
        let ctx = LambdaContext {
            gram: &gram,
            x: None,
            model: Some(&model),
            b1: 1.0,
            solver: &cfg,
        };
        let got = resolve_lambda(&LambdaRule::Oracle { c0: 0.5, k: 2.0 }, &ctx).unwrap();
        let d0p = model.b_op_norm().sqrt() + model.a_max_diag().sqrt();
        let d_or = 2.0 * (model.a_lambda_max().sqrt() + model.b_op_norm().sqrt());
        let tau_half = model.tau_b().sqrt() + d_or / 2.0;
        for (j, l) in got.iter().enumerate() {
            let (beta, s2) = model.population_regression(j).unwrap();
            let want = 4.0
                * 0.5
                * 4.0
                * d0p
                * (tau_half * l2_norm(&beta) + s2.sqrt())
                * (4f64.ln() / 80.0).sqrt();
            assert!((l - want).abs() < 1e-12);
            assert!(*l > 0.0);
        }
        // oracle without a model is refused
        let ctx2 = LambdaContext { model: None, ..ctx };
        assert!(resolve_lambda(&LambdaRule::oracle(), &ctx2).is_err());
    }

    #[test]
    fn plugin_lambda_matches_direct_formula() {
        let a = ar1_covariance(3, 0.4).unwrap();
        let model = build_model(a, NoiseCov::scaled_identity(60, 0.5).unwrap(), false).unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 3).unwrap();
        let (_, tau) = estimate_trace_b(&s.x, 3.0).unwrap();
        let gram = corrected_gram(&s.x, tau).unwrap();
        let cfg = SolverConfig::default();
        let ctx = LambdaContext {
            gram: &gram,
            x: None,
            model: None,
            b1: 1.0,
            solver: &cfg,
        };
        let got = resolve_lambda(&LambdaRule::plugin(), &ctx).unwrap();
        let a_max_hat = (0..3)
            .map(|j| gram.gamma_hat.get(j, j))
            .fold(f64::MIN, f64::max)
            .max(1.0);
        let d0p = tau.sqrt() + a_max_hat.sqrt();
        let tau_half = tau.sqrt() + 2.0 * (a_max_hat.sqrt() + tau.sqrt()) / 3f64.sqrt();
        for (j, l) in got.iter().enumerate() {
            let sigma = gram.gamma_hat.get(j, j).max(0.1).sqrt();
            let want = 4.0
                * 4.0
                * d0p
                * (tau_half * a_max_hat.sqrt() + sigma)
                * (3f64.ln() / 60.0).sqrt();
            assert!((l - want).abs() < 1e-12, "column {}: {} vs {}", j, l, want);
            assert!(*l > 0.0);
        }
    }

    #[test]
    fn fixed_and_per_column_pass_through() {
        let gram = gram_from_matrix(&SymmetricMatrix::identity(3), 10);
        let cfg = SolverConfig::default();
        let ctx = LambdaContext {
            gram: &gram,
            x: None,
            model: None,
            b1: 1.0,
            solver: &cfg,
        };
        assert_eq!(
            resolve_lambda(&LambdaRule::Fixed(0.0), &ctx).unwrap(),
            vec![0.0; 3]
        );
        let per = vec![0.1, 0.2, 0.3];
        assert_eq!(
            resolve_lambda(&LambdaRule::PerColumn(per.clone()), &ctx).unwrap(),
            per
        );
        assert!(resolve_lambda(&LambdaRule::PerColumn(vec![0.1]), &ctx).is_err());
        assert!(resolve_lambda(&LambdaRule::Fixed(-0.1), &ctx).is_err());
    }

    #[test]
    fn grid_lambda_stays_in_bounds_and_needs_data() {
        let a = ar1_covariance(4, 0.5).unwrap();
        let model = build_model(a, NoiseCov::scaled_identity(60, 0.2).unwrap(), false).unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 8).unwrap();
        let (_, tau) = estimate_trace_b(&s.x, 4.0).unwrap();
        let gram = corrected_gram(&s.x, tau).unwrap();
        let cfg = SolverConfig::default();
        let ctx = LambdaContext {
            gram: &gram,
            x: Some(&s.x),
            model: None,
            b1: 2.0,
            solver: &cfg,
        };
        let centers = resolve_lambda(&LambdaRule::plugin(), &ctx).unwrap();
        let picked = resolve_lambda(&LambdaRule::grid(), &ctx).unwrap();
        for (p, c) in picked.iter().zip(&centers) {
            assert!(*p >= c / 10.0 - 1e-12 && *p <= 10.0 * c + 1e-12);
        }
        let ctx2 = LambdaContext { x: None, ..ctx };
        assert!(resolve_lambda(&LambdaRule::grid(), &ctx2).is_err());
    }

    #[test]
    fn population_gram_recovers_inverse_exactly() {
        for seed in [1u64, 2, 3] {
            let a = random_spd(5, seed);
            let model = build_model(a.clone(), NoiseCov::zero(4), true).unwrap();
            let a = model.a().clone();
            let gram = gram_from_matrix(&a, 1000);
            let b1 = oracle_b1(&model);
            let est = estimate_from_gram(
                &gram,
                None,
                &LambdaRule::Fixed(0.0),
                b1,
                &SolverConfig::default(),
                &EstimateOptions::default(),
            )
            .unwrap();
            let dev = est
                .theta_tilde
                .sub(model.theta().dense())
                .unwrap()
                .max_abs();
            assert!(dev <= 1e-6, "seed {}: max deviation {}", seed, dev);
            assert!(!est.repair_triggered);
        }
    }

    #[test]
    fn huge_penalty_inverts_the_diagonal() {
        let diag = SymmetricMatrix::from_fn(3, |i, j| {
            if i == j {
                (i + 1) as f64
            } else {
                0.0
            }
        });
        let gram = gram_from_matrix(&diag, 50);
        let est = estimate_from_gram(
            &gram,
            None,
            &LambdaRule::Fixed(100.0),
            1.0,
            &SolverConfig::default(),
            &EstimateOptions::default(),
        )
        .unwrap();
        for j in 0..3 {
            assert!((est.theta_tilde.get(j, j) - 1.0 / (j + 1) as f64).abs() < 1e-12);
            assert!(est.per_column[j].beta.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn two_by_two_monte_carlo_recovery() {
        // Theta for A = [[1, 0.5], [0.5, 1]] is [[4/3, -2/3], [-2/3, 4/3]].
        let a = ar1_covariance(2, 0.5).unwrap();
        let model = build_model(a, NoiseCov::zero(10_000), false).unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 21).unwrap();
        let est = estimate_theta(
            &s.x,
            2.0,
            &LambdaRule::Fixed(0.0),
            oracle_b1(&model),
            &SolverConfig::default(),
        )
        .unwrap();
        let want = [[4.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 4.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                let got = est.theta_hat.get(i, j);
                assert!(
                    (got - want[i][j]).abs() < 0.05,
                    "({}, {}): {} vs {}",
                    i,
                    j,
                    got,
                    want[i][j]
                );
            }
        }
    }

    #[test]
    fn symmetrize_hand_values() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let s = symmetrize(&m).unwrap();
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(0, 0), 1.0);
        // idempotent on symmetric input
        let again = symmetrize(s.dense()).unwrap();
        assert_eq!(again.dense().as_slice(), s.dense().as_slice());
        // entrywise l1 distance equals the analytic minimum over symmetric
        // matrices: sum of half-gaps per off-diagonal pair, times two
        let r = DenseMatrix::from_fn(4, 4, |i, j| ((i * 4 + j) as f64 * 0.7).sin());
        let sym = symmetrize(&r).unwrap();
        let dist: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| (r.get(i, j) - sym.get(i, j)).abs())
            .sum();
        let analytic: f64 = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| (r.get(i, j) - r.get(j, i)).abs())
            .sum();
        assert!((dist - analytic).abs() < 1e-12);
    }

    #[test]
    fn psd_repair_contract() {
        // already PSD: returned bit-identical
        let spd = ar1_covariance(3, 0.4).unwrap();
        let out = psd_repair(&spd, None).unwrap();
        assert_eq!(out.dense().as_slice(), spd.dense().as_slice());
        // diagonal hand case: eps = -lambda_min = 1
        let ind = SymmetricMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => -1.0,
            (1, 1) => 2.0,
            _ => 0.0,
        });
        let fixed = psd_repair(&ind, None).unwrap();
        assert!((fixed.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((fixed.get(1, 1) - 2.0).abs() < 1e-12);
        // explicit eps validation
        assert!(psd_repair(&ind, Some(1.5)).is_err());
        assert!(psd_repair(&ind, Some(0.0)).is_err());
        let half = psd_repair(&ind, Some(0.5)).unwrap();
        assert!((half.get(0, 0) - 0.5).abs() < 1e-12);
        // 3x bound against a true PSD target
        let truth = SymmetricMatrix::identity(2);
        let err_before =
            crate::linalg::spectral_norm(&ind.dense().sub(truth.dense()).unwrap()).unwrap();
        let err_after =
            crate::linalg::spectral_norm(&fixed.dense().sub(truth.dense()).unwrap()).unwrap();
        assert!(err_after <= 3.0 * err_before + 1e-12);
    }

    #[test]
    fn degenerate_diagonal_errors_unless_clamped() {
        let g = SymmetricMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => 1e-9,
            (1, 1) => 1.0,
            _ => 0.0,
        });
        let gram = gram_from_matrix(&g, 100);
        let err = estimate_from_gram(
            &gram,
            None,
            &LambdaRule::Fixed(0.0),
            1.0,
            &SolverConfig::default(),
            &EstimateOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::DegenerateDiagonal { column, .. } => assert_eq!(column, 0),
            other => panic!("expected degenerate diagonal, got {:?}", other),
        }
        let est = estimate_from_gram(
            &gram,
            None,
            &LambdaRule::Fixed(0.0),
            1.0,
            &SolverConfig::default(),
            &EstimateOptions {
                clamp_degenerate: true,
            },
        )
        .unwrap();
        assert!((est.theta_tilde.get(0, 0) - 1.0 / DIAG_FLOOR).abs() < 1e-6);
        assert!(est.theta_tilde.get(1, 1) > 0.0);
    }

    #[test]
    fn transpose_pathway_is_bit_exact() {
        // wide data: the transposed problem sees 200 samples of an
        // 8-dimensional target, so assembly stays well-conditioned
        let a = ar1_covariance(200, 0.3).unwrap();
        let b = SymmetricMatrix::from_fn(8, |i, j| {
            if i == j {
                1.0
            } else if j - i == 1 {
                0.2
            } else {
                0.0
            }
        });
        let model = build_model(a, NoiseCov::Dense(b), false).unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 33).unwrap();
        let rule = LambdaRule::Fixed(0.2);
        let cfg = SolverConfig::default();
        let via_phi = estimate_phi(&s.x, &rule, 1.0, &cfg).unwrap();
        let via_theta = estimate_theta_with_tau(
            &s.x.transpose(),
            1.0,
            &rule,
            1.0,
            &cfg,
            &EstimateOptions::default(),
        )
        .unwrap();
        assert_eq!(
            via_phi.theta_tilde.as_slice(),
            via_theta.theta_tilde.as_slice()
        );
        assert_eq!(
            via_phi.theta_psd.dense().as_slice(),
            via_theta.theta_psd.dense().as_slice()
        );
    }

    #[test]
    fn sparse_eigenvalue_hand_cases() {
        let diag = SymmetricMatrix::from_fn(3, |i, j| {
            if i == j {
                (i + 1) as f64
            } else {
                0.0
            }
        });
        assert_eq!(sparse_eigenvalues(&diag, 2).unwrap(), (3.0, 1.0));
        let corr = SymmetricMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.9 });
        let (hi, lo) = sparse_eigenvalues(&corr, 1).unwrap();
        assert_eq!((hi, lo), (1.0, 1.0));
        let (hi, lo) = sparse_eigenvalues(&corr, 2).unwrap();
        assert!((hi - 1.9).abs() < 1e-12 && (lo - 0.1).abs() < 1e-12);
        let big = SymmetricMatrix::identity(21);
        assert!(sparse_eigenvalues(&big, 2).is_err());
        assert!(sparse_eigenvalues(&diag, 0).is_err());
        assert!(sparse_eigenvalues(&diag, 4).is_err());
    }

    #[test]
    fn support_enumeration_counts() {
        let mut count = 0usize;
        for_each_support(5, 3, |s| {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            count += 1;
        });
        assert_eq!(count, 10);
        let mut single = 0usize;
        for_each_support(4, 4, |_| single += 1);
        assert_eq!(single, 1);
    }

    #[test]
    fn s0_hand_value_and_limits() {
        let a = SymmetricMatrix::identity(3);
        // n chosen so the budget is barely above 1: only s = 1 fits
        assert_eq!(compute_s0(&a, 0.0, 1125, 3, 1.0).unwrap(), 1);
        // enormous n: capped at dim = m = 3
        assert_eq!(compute_s0(&a, 0.0, 100_000_000, 3, 1.0).unwrap(), 3);
        // tiny n: nothing qualifies
        assert_eq!(compute_s0(&a, 0.0, 2, 3, 1.0).unwrap(), 0);
    }

    #[test]
    fn re_probe_identity_and_zero() {
        let id = SymmetricMatrix::identity(4);
        let report = probe_lower_re(&id, 1.0, 0.0, 500, 9).unwrap();
        assert!(report.clean(), "violations {}", report.violations);
        assert!(report.worst_margin >= 0.0);
        let zero = SymmetricMatrix::zeros(4);
        let report = probe_lower_re(&zero, 1.0, 0.0, 100, 9).unwrap();
        assert_eq!(report.violations, 100);
        assert!(report.first_violation.as_ref().unwrap().trial == 0);
        assert!(report.worst_margin < 0.0);
    }

    #[test]
    fn ridge_radius_brackets_population_norms() {
        let a = random_spd(6, 11);
        let model = build_model(a, NoiseCov::zero(4), true).unwrap();
        let gram = gram_from_matrix(model.a(), 500);
        let b1 = ridge_b1(&gram).unwrap();
        let max_l1 = model.max_beta_l1();
        assert!(
            b1 >= 0.8 * max_l1 && b1 <= 2.0 * 2.5 * max_l1.max(DIAG_FLOOR),
            "b1 {} vs max beta l1 {}",
            b1,
            max_l1
        );
        assert!((oracle_b1(&model) - 1.1 * max_l1).abs() < 1e-15);
    }
}
