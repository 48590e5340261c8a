//! Corrected-Lasso solver for the nodewise regressions:
//!
//! ```text
//! minimize  0.5 b' Gamma b - <gamma, b> + lambda ||b||_1
//! subject to ||b||_1 <= b1
//! ```
//!
//! `Gamma` may be indefinite (the trace correction can push eigenvalues
//! below zero), so with `lambda = 0` and no ball the objective would be
//! unbounded; the l1 ball keeps the problem well-posed. Composite gradient
//! descent handles it: each step minimizes the quadratic majorizer at
//! curvature `eta` plus the penalty, which reduces to a soft-threshold
//! followed by an l1-ball projection. That composition is the exact prox
//! because both pieces act by shifting entries toward zero, and the shifts
//! add.

use crate::error::{dim_err, param_err, Error, Result};
use crate::linalg::{
    dot, eig_sym, l1_norm, l2_norm, project_l1_ball, soft_threshold, SymmetricMatrix,
};

/// One nodewise regression instance.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    /// Quadratic term, `p x p`, symmetric, possibly indefinite.
    pub gram: SymmetricMatrix,
    /// Linear term, length `p`.
    pub target: Vec<f64>,
    /// Penalty level, `>= 0`.
    pub lambda: f64,
    /// l1-ball radius, finite and `> 0`.
    pub b1: f64,
}

impl LassoProblem {
    pub fn p(&self) -> usize {
        self.target.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gram.dim() != self.target.len() {
            return Err(dim_err(
                "lasso",
                format!(
                    "gram is {0}x{0} but target has length {1}",
                    self.gram.dim(),
                    self.target.len()
                ),
            ));
        }
        if !self.target.iter().all(|v| v.is_finite()) {
            return Err(param_err("target", "entries must be finite"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(param_err(
                "lambda",
                format!("{} is not finite and >= 0", self.lambda),
            ));
        }
        if !(self.b1 > 0.0 && self.b1.is_finite()) {
            return Err(param_err(
                "b1",
                format!("{} is not finite and > 0", self.b1),
            ));
        }
        Ok(())
    }

    /// Full objective `0.5 b' Gamma b - <gamma, b> + lambda ||b||_1`.
    pub fn objective(&self, beta: &[f64]) -> Result<f64> {
        let gb = self.gram.matvec(beta)?;
        Ok(0.5 * dot(beta, &gb) - dot(&self.target, beta) + self.lambda * l1_norm(beta))
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Majorization curvature; `None` resolves via [`auto_eta`].
    pub eta: Option<f64>,
    pub max_iters: usize,
    /// Relative step-size stopping threshold.
    pub tol: f64,
    /// Record the objective after every step.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: None,
            max_iters: 10_000,
            tol: 1e-8,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub beta: Vec<f64>,
    /// Composite gradient steps taken.
    pub iterations: usize,
    /// Objective value before any step, then after each step.
    pub objective_trace: Option<Vec<f64>>,
    /// False when `max_iters` ran out before the step-size criterion held.
    pub converged: bool,
    /// True when the solution sits on the l1-ball boundary.
    pub constraint_active: bool,
}

/// Step curvature guaranteeing monotone descent: at least the spectral norm
/// of `Gamma` (the gradient's Lipschitz constant), and at least
/// `(11/8) lambda_max` when the top eigenvalue is positive. Requires an
/// eigendecomposition; when solving many principal-submatrix problems of one
/// matrix, compute this once on the full matrix (interlacing makes it an
/// upper bound for every submatrix) and pass it as an explicit `eta`.
pub fn auto_eta(gram: &SymmetricMatrix) -> Result<f64> {
    let eig = eig_sym(gram)?;
    let spectral = eig.lambda_max().abs().max(eig.lambda_min().abs());
    Ok((spectral * (1.0 + 1e-6))
        .max(11.0 / 8.0 * eig.lambda_max().max(0.0))
        .max(1e-8))
}

fn prox_step(beta_t: &[f64], grad: &[f64], lambda: f64, b1: f64, eta: f64) -> Vec<f64> {
    let u: Vec<f64> = beta_t
        .iter()
        .zip(grad)
        .map(|(b, g)| b - g / eta)
        .collect();
    project_l1_ball(&soft_threshold(&u, lambda / eta), b1)
        .expect("radius was validated with the problem")
}

/// One composite gradient step: the exact minimizer over the l1 ball of
/// `(eta/2) ||b - (beta_t - grad/eta)||^2 + lambda ||b||_1`.
pub fn composite_gradient_step(beta_t: &[f64], problem: &LassoProblem, eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(param_err("eta", format!("{} is not finite and > 0", eta)));
    }
    let gb = problem.gram.matvec(beta_t)?;
    let grad: Vec<f64> = gb.iter().zip(&problem.target).map(|(a, t)| a - t).collect();
    Ok(prox_step(beta_t, &grad, problem.lambda, problem.b1, eta))
}

/// Run composite gradient descent from `beta = 0` until the step norm falls
/// below `tol * (1 + ||beta||)` or `max_iters` runs out (reported through
/// `converged`, not an error). A non-finite objective is an error: it only
/// happens when a forced-small `eta` lets the linearized point overflow.
pub fn solve_lasso(problem: &LassoProblem, config: &SolverConfig) -> Result<LassoSolution> {
    problem.validate()?;
    let eta = match config.eta {
        Some(e) => {
            if !(e > 0.0 && e.is_finite()) {
                return Err(param_err("eta", format!("{} is not finite and > 0", e)));
            }
            e
        }
        None => auto_eta(&problem.gram)?,
    };
    if config.max_iters == 0 {
        return Err(param_err("max_iters", "must be >= 1"));
    }
    if !(config.tol > 0.0) {
        return Err(param_err("tol", format!("{} is not > 0", config.tol)));
    }
    let p = problem.p();
    let mut beta = vec![0.0f64; p];
    let mut grad_base = vec![0.0f64; p]; // Gamma beta, reused for the objective
    let mut trace = if config.record_trace {
        Some(vec![0.0f64]) // objective at the origin
    } else {
        None
    };
    for iter in 1..=config.max_iters {
        let grad: Vec<f64> = grad_base
            .iter()
            .zip(&problem.target)
            .map(|(a, t)| a - t)
            .collect();
        let next = prox_step(&beta, &grad, problem.lambda, problem.b1, eta);
        debug_assert!(l1_norm(&next) <= problem.b1 * (1.0 + 1e-12) + 1e-12);
        let step_sq: f64 = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let converged = step_sq.sqrt() <= config.tol * (1.0 + l2_norm(&beta));
        grad_base = problem.gram.matvec(&next)?;
        let objective = 0.5 * dot(&next, &grad_base) - dot(&problem.target, &next)
            + problem.lambda * l1_norm(&next);
        if !objective.is_finite() {
            return Err(Error::Divergence {
                iterate_norm: l2_norm(&next),
            });
        }
        if let Some(t) = trace.as_mut() {
            t.push(objective);
        }
        beta = next;
        if converged {
            let constraint_active = l1_norm(&beta) >= problem.b1 * (1.0 - 1e-9);
            return Ok(LassoSolution {
                beta,
                iterations: iter,
                objective_trace: trace,
                converged: true,
                constraint_active,
            });
        }
    }
    let constraint_active = l1_norm(&beta) >= problem.b1 * (1.0 - 1e-9);
    Ok(LassoSolution {
        beta,
        iterations: config.max_iters,
        objective_trace: trace,
        converged: false,
        constraint_active,
    })
}

/// Exhaustive grid minimizer of the full objective over the l1 ball, for
/// validating the solver on tiny instances. Grid coordinates are integer
/// multiples of `grid_step` in `[-b1, b1]`.
pub fn brute_force_lasso(problem: &LassoProblem, grid_step: f64) -> Result<Vec<f64>> {
    problem.validate()?;
    if !(grid_step > 0.0) {
        return Err(param_err(
            "grid_step",
            format!("{} is not > 0", grid_step),
        ));
    }
    let p = problem.p();
    if p > 3 {
        return Err(dim_err(
            "brute_force_lasso",
            format!("exhaustive search supports p <= 3, got {}", p),
        ));
    }
    let k_max = (problem.b1 / grid_step).floor() as i64;
    let coord = |k: i64| k as f64 * grid_step;
    let mut best = vec![0.0f64; p];
    let mut best_obj = f64::INFINITY;
    let g = &problem.gram;
    let t = &problem.target;
    let lam = problem.lambda;
    let mut consider = |beta: &[f64]| {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        for i in 0..p {
            let bi = beta[i];
            lin += t[i] * bi;
            l1 += bi.abs();
            let mut row = 0.0;
            for (k, bk) in beta.iter().enumerate() {
                row += g.get(i, k) * bk;
            }
            quad += bi * row;
        }
        let obj = 0.5 * quad - lin + lam * l1;
        if obj < best_obj {
            best_obj = obj;
            best = beta.to_vec();
        }
    };
    match p {
        1 => {
            for k0 in -k_max..=k_max {
                consider(&[coord(k0)]);
            }
        }
        2 => {
            for k0 in -k_max..=k_max {
                let rem = k_max - k0.abs();
                for k1 in -rem..=rem {
                    consider(&[coord(k0), coord(k1)]);
                }
            }
        }
        _ => {
            for k0 in -k_max..=k_max {
                let rem0 = k_max - k0.abs();
                for k1 in -rem0..=rem0 {
                    let rem1 = rem0 - k1.abs();
                    for k2 in -rem1..=rem1 {
                        consider(&[coord(k0), coord(k1), coord(k2)]);
                    }
                }
            }
        }
    }
    Ok(best)
}
