//! Diagnostics for the sparse-recovery conditions behind the estimator.
//!
//! The nodewise solves are trustworthy when the corrected Gram matrix keeps
//! a positive lower restricted eigenvalue: quadratic forms over sparse (or
//! effectively sparse) directions stay bounded below even when the matrix
//! itself is indefinite. This example enumerates sparse eigenvalues on a
//! small case, computes the sparsity budget a given data size supports, and
//! runs a randomized probe of the lower curvature bound on a larger one.
//!
//! Run with `cargo run --example re_diagnostics`.

use kronsum::gram::corrected_gram;
use kronsum::linalg::eig_sym;
use kronsum::model::{ar1_covariance, build_model, sample, EntryLaw, NoiseCov, SubgaussianSpec};
use kronsum::precision::{compute_s0, probe_lower_re, sparse_eigenvalues};
use kronsum::Result;

fn main() -> Result<()> {
    // exhaustive sparse eigenvalues on a small indefinite corrected Gram
    let (n, m) = (30, 12);
    let model = build_model(
        ar1_covariance(m, 0.5)?,
        NoiseCov::scaled_identity(n, 3.0)?,
        true,
    )?;
    let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 77)?;
    let (_, tau) = kronsum::gram::estimate_trace_b(&s.x, m as f64)?;
    let gram = corrected_gram(&s.x, tau)?;
    let full = eig_sym(&gram.gamma_hat)?;
    println!(
        "corrected Gram ({} x {0}): lambda in [{:.3}, {:.3}]",
        m,
        full.lambda_min(),
        full.lambda_max()
    );
    for d in [1, 2, 4] {
        let (hi, lo) = sparse_eigenvalues(&gram.gamma_hat, d)?;
        println!("  {}-sparse eigenvalues: [{:.3}, {:.3}]", d, lo, hi);
    }

    // the sparsity budget the theory supports grows like sqrt(n) and
    // shrinks with the noise level; its constants are conservative, so
    // usable budgets need large n
    for tau_b in [0.5, 3.0] {
        for n in [10_000, 100_000, 1_000_000] {
            let s0 = compute_s0(model.a(), tau_b, n, m, 1.0)?;
            println!("tau_B = {:.1}, n = {:>7}: s0 = {}", tau_b, n, s0);
        }
    }

    // randomized lower-curvature probe on a larger problem where full
    // enumeration is out of reach
    let (n, m) = (80, 150);
    let model = build_model(
        ar1_covariance(m, 0.4)?,
        NoiseCov::scaled_identity(n, 1.0)?,
        true,
    )?;
    let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 78)?;
    let (_, tau) = kronsum::gram::estimate_trace_b(&s.x, m as f64)?;
    let gram = corrected_gram(&s.x, tau)?;
    let lambda_min_a = model.a_lambda_min();
    // alpha: half the smallest signal eigenvalue; tau term absorbs the
    // l1 mass of dense directions
    let report = probe_lower_re(&gram.gamma_hat, lambda_min_a / 2.0, 0.05, 5000, 99)?;
    println!(
        "\nrandomized probe (m = {}): {} trials, {} violations, worst margin {:.4}, clean: {}",
        m,
        report.trials,
        report.violations,
        report.worst_margin,
        report.clean()
    );
    if let Some(v) = &report.first_violation {
        println!(
            "  first violation at trial {}: quadratic form {:.4} vs bound {:.4}",
            v.trial, v.quadratic_form, v.bound
        );
    }
    Ok(())
}
