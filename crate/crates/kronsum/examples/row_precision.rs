//! Estimating the row (noise) precision matrix, and the transpose duality
//! behind it.
//!
//! The model is symmetric in its two factors: transposing `X` swaps the
//! roles of signal and noise, turning the row-precision problem into a
//! column-precision problem whose per-entry correction level is the
//! (normalized) signal variance, i.e. 1. `estimate_phi` is exactly that
//! composition, so the duality holds bit for bit, not just approximately.
//!
//! Run with `cargo run --example row_precision`.

use kronsum::linalg::spectral_norm;
use kronsum::model::{
    ar1_covariance, banded_precision, build_model, sample, EntryLaw, NoiseCov, SubgaussianSpec,
};
use kronsum::precision::{estimate_phi, estimate_theta_with_tau, LambdaRule};
use kronsum::solver::SolverConfig;
use kronsum::Result;

fn main() -> Result<()> {
    // n small, m large: plenty of transposed samples for an n x n target
    let (n, m) = (12, 800);
    let b = banded_precision(n, 3, 0.4)?.inverse_spd()?;
    let phi = b.inverse_spd()?;
    let model = build_model(ar1_covariance(m, 0.3)?, NoiseCov::Dense(b), true)?;
    let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 9)?;

    let rule = LambdaRule::Plugin { c0: 0.05, k: 2.0 };
    let config = SolverConfig::default();
    let est = estimate_phi(&s.x, &rule, 4.0, &config)?;
    let err = spectral_norm(&est.theta_hat.dense().sub(phi.dense())?)?;
    println!(
        "row precision: ||Phi_hat - Phi||_2 = {:.3} (||Phi||_2 = {:.3})",
        err,
        spectral_norm(phi.dense())?
    );

    // duality check: the same estimate falls out of the column pipeline on
    // the transposed data with correction level 1
    let dual = estimate_theta_with_tau(
        &s.x.transpose(),
        1.0,
        &rule,
        4.0,
        &config,
        &Default::default(),
    )?;
    let same = est
        .theta_tilde
        .as_slice()
        .iter()
        .zip(dual.theta_tilde.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("bitwise equal to the transposed column pipeline: {}", same);

    // more columns = more transposed samples = a better row estimate
    // (averaged over a few draws to smooth out single-sample luck)
    for m in [100, 400, 1600] {
        let model = build_model(
            ar1_covariance(m, 0.3)?,
            NoiseCov::Dense(banded_precision(n, 3, 0.4)?.inverse_spd()?),
            true,
        )?;
        let mut err = 0.0;
        for seed in 0..5 {
            let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), seed)?;
            let est = estimate_phi(&s.x, &rule, 4.0, &config)?;
            err += spectral_norm(&est.theta_hat.dense().sub(phi.dense())?)? / 5.0;
        }
        println!("  m = {:>5}: mean error {:.3}", m, err);
    }
    Ok(())
}
