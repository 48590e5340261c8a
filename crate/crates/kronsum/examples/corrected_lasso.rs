//! The constrained lasso solver on corrected (possibly indefinite) inputs.
//!
//! Each nodewise regression minimizes
//! `beta' Gamma beta / 2 - gamma' beta + lambda ||beta||_1` over the l1 ball
//! `||beta||_1 <= b1`. The noise correction can make `Gamma` indefinite, so
//! the objective may be unbounded without the ball; inside it, composite
//! gradient steps with a spectral step size descend monotonically.
//!
//! Run with `cargo run --example corrected_lasso`.

use kronsum::linalg::{l1_norm, SymmetricMatrix};
use kronsum::solver::{auto_eta, brute_force_lasso, solve_lasso, LassoProblem, SolverConfig};
use kronsum::Result;

fn main() -> Result<()> {
    // a definite 2-d problem: solver vs exhaustive grid search
    let problem = LassoProblem {
        gram: SymmetricMatrix::from_dense(kronsum::linalg::DenseMatrix::new(
            2,
            2,
            vec![1.0, 0.35, 0.35, 1.0],
        )?)?,
        target: vec![0.8, -0.3],
        lambda: 0.05,
        b1: 2.0,
    };
    let config = SolverConfig {
        record_trace: true,
        ..SolverConfig::default()
    };
    let sol = solve_lasso(&problem, &config)?;
    let brute = brute_force_lasso(&problem, 1e-3)?;
    println!(
        "definite 2-d: solver ({:.4}, {:.4}), grid ({:.4}, {:.4}), {} iterations",
        sol.beta[0], sol.beta[1], brute[0], brute[1], sol.iterations
    );

    // the recorded objective never increases
    let trace = sol.objective_trace.as_ref().unwrap();
    let worst = trace
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "descent: {} objective values, largest step change {:.2e} (<= 0 expected)",
        trace.len(),
        worst
    );

    // an indefinite problem: unbounded below outside the ball, so the
    // constraint is what makes the answer exist
    let indefinite = LassoProblem {
        gram: SymmetricMatrix::from_dense(kronsum::linalg::DenseMatrix::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, -0.5],
        )?)?,
        target: vec![0.2, 0.4],
        lambda: 0.05,
        b1: 1.5,
    };
    let eta = auto_eta(&indefinite.gram)?;
    let sol = solve_lasso(&indefinite, &SolverConfig::default())?;
    println!(
        "indefinite 2-d: eta = {:.3}, beta = ({:.4}, {:.4}), ||beta||_1 = {:.4}, on boundary: {}",
        eta,
        sol.beta[0],
        sol.beta[1],
        l1_norm(&sol.beta),
        sol.constraint_active
    );

    // heavy penalty zeroes the solution outright
    let heavy = LassoProblem {
        lambda: 10.0,
        ..problem
    };
    let sol = solve_lasso(&heavy, &SolverConfig::default())?;
    println!(
        "lambda = 10: beta = ({:.4}, {:.4}) in {} iterations",
        sol.beta[0], sol.beta[1], sol.iterations
    );
    Ok(())
}
