//! What repeated measurements buy: noise-covariance estimation from paired
//! differences, and sharper signal estimates from replicate means or stacks.
//!
//! With `N` replicates of the same subject, consecutive pairs share the
//! signal, so their differences are pure noise (doubled): `B` becomes
//! directly estimable and a penalized inverse gives the row precision
//! matrix. Averaging the replicates keeps the signal but divides the noise
//! level by `N`, so the column pipeline runs on far cleaner data. When the
//! replicates are independent draws instead, stacking them is the right
//! move.
//!
//! Run with `cargo run --example replicate_pipelines`.

use kronsum::linalg::spectral_norm;
use kronsum::model::{ar1_covariance, build_model, NoiseCov, SubgaussianSpec};
use kronsum::precision::{ridge_b1, LambdaRule};
use kronsum::replicates::{
    default_glasso_rho, estimate_b_tilde, estimate_theta_replicates, glasso, glasso_kkt_residual,
    pair_differences, sample_replicates, stack_case2, GlassoConfig,
};
use kronsum::solver::SolverConfig;
use kronsum::Result;

fn main() -> Result<()> {
    let (n, m, count) = (100, 15, 60);
    let law = SubgaussianSpec::new(kronsum::model::EntryLaw::Gaussian);
    let b = ar1_covariance(n, 0.4)?.scale(0.8);
    let phi = b.inverse_spd()?;
    let model = build_model(ar1_covariance(m, 0.5)?, NoiseCov::Dense(b), true)?;

    // shared-signal replicates: differencing cancels the signal exactly
    let reps = sample_replicates(&model, law, count, true, 41)?;
    let pd = pair_differences(&reps)?;
    let b_tilde = estimate_b_tilde(&pd.diffs)?;
    let b_err = spectral_norm(&b_tilde.dense().sub(model.b().to_dense().dense())?)?;
    println!(
        "N = {}: ||B_tilde - B||_2 = {:.3} from {} pair differences",
        count,
        b_err,
        pd.diffs.len()
    );

    // penalized inverse of B_tilde, stationarity verified on the output
    let rho = default_glasso_rho(n, count, m);
    let config = GlassoConfig {
        rho,
        ..GlassoConfig::default()
    };
    let phi_hat = glasso(&b_tilde, &config)?;
    println!(
        "glasso (rho = {:.3}): ||Phi_hat - Phi||_F = {:.3}, kkt residual = {:.1e}",
        rho,
        phi_hat.dense().sub(phi.dense())?.frobenius_norm(),
        glasso_kkt_residual(&b_tilde, &phi_hat, rho)?
    );

    // replicate mean: same signal, noise level shrunk by N; powerful enough
    // data that per-column cross-validation is worth its cost
    let mean = reps.mean();
    let tau = b_tilde.trace() / (n as f64 * count as f64);
    let gram = kronsum::gram::corrected_gram(&mean, tau)?;
    let est = estimate_theta_replicates(
        &reps,
        &b_tilde,
        &LambdaRule::Grid { c0: 0.05, k: 2.0 },
        ridge_b1(&gram)?,
        &SolverConfig::default(),
    )?;
    let theta_err = spectral_norm(&est.theta_hat.dense().sub(model.theta().dense())?)?;
    println!(
        "mean pipeline: ||Theta_hat - Theta||_2 = {:.3} (||Theta||_2 = {:.3}) at effective noise tau = {:.4}",
        theta_err,
        spectral_norm(model.theta().dense())?,
        tau
    );

    // fewer replicates, noisier Phi estimate
    for count in [10, 30, 120] {
        let reps = sample_replicates(&model, law, count, true, 41)?;
        let b_tilde = estimate_b_tilde(&pair_differences(&reps)?.diffs)?;
        let config = GlassoConfig {
            rho: default_glasso_rho(n, count, m),
            ..GlassoConfig::default()
        };
        let phi_hat = glasso(&b_tilde, &config)?;
        println!(
            "  N = {:>3}: Phi error {:.3}",
            count,
            phi_hat.dense().sub(phi.dense())?.frobenius_norm()
        );
    }

    // independent replicates: no pairing possible, stack instead
    let indep = sample_replicates(&model, law, 8, false, 43)?;
    let (wide, tall) = stack_case2(&indep)?;
    println!(
        "\nindependent replicates: wide stack {} x {} (row problem), tall stack {} x {} (column problem)",
        wide.rows(),
        wide.cols(),
        tall.rows(),
        tall.cols()
    );
    Ok(())
}
