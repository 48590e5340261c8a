//! Acceptance suite: one test per shipped guarantee. Each prints a single
//! verdict line of the form `[criterion N] PASS/FAIL - detail` (written
//! past the libtest capture so the lines land in plain `cargo test`
//! output) and then asserts.
//!
//! Heavy fixtures (the rate sweeps, whose noise factors need an n x n
//! eigendecomposition up to n = 4000) are computed once per process and
//! shared across criteria.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kronsum::gram::{estimate_trace_b, CorrectedGram};
use kronsum::harness::{fit_rate, run_experiment, B1Spec, ExperimentConfig, MetricsRow, ModelSource, NoiseSource};
use kronsum::linalg::{eig_sym, spectral_norm, DenseMatrix, SymmetricMatrix};
use kronsum::model::{
    ar1_covariance, banded_precision_covariance, build_model, random_spd, sample, EntryLaw,
    NoiseCov, SubgaussianSpec,
};
use kronsum::precision::{
    estimate_from_gram, estimate_phi, estimate_theta_with_tau, EstimateOptions, LambdaRule,
};
use kronsum::replicates::{
    default_glasso_rho, estimate_b_tilde, estimate_theta_replicates, glasso, glasso_kkt_residual,
    pair_differences, sample_replicates, GlassoConfig,
};
use kronsum::solver::{brute_force_lasso, solve_lasso, LassoProblem, SolverConfig};

/// Print the verdict both through libtest (shown on failure) and straight
/// to the process stdout (shown always), then enforce it.
fn report(criterion: usize, pass: bool, detail: String) {
    let line = format!(
        "[criterion {}] {} - {}",
        criterion,
        if pass { "PASS" } else { "FAIL" },
        detail
    );
    {
        use std::io::Write;
        if let Ok(mut out) = std::fs::OpenOptions::new().write(true).open("/dev/stdout") {
            let _ = writeln!(out, "{}", line);
        }
    }
    println!("{}", line);
    assert!(pass, "{}", line);
}

fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------- shared

/// The rate fixture: tridiagonal precision (m = 50, degree 3, condition
/// number 4), AR(1) noise at half strength capped by the signal's top
/// eigenvalue, oracle penalties, 20 repetitions per sample size.
fn rate_config(law: EntryLaw) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSource::BandedPrecision {
            m: 50,
            d: 3,
            strength: 0.3,
        },
        noise: NoiseSource::Ar1 {
            rho: 0.3,
            scale: 0.5,
        },
        cap_noise_to_signal: true,
        n_grid: vec![250, 500, 1000, 2000, 4000],
        reps: 20,
        lambda: LambdaRule::Oracle { c0: 0.02, k: 2.0 },
        solver: SolverConfig::default(),
        law,
        b1: B1Spec::Oracle,
        seed: 1,
        timing: false,
        out_dir: None,
    }
}

fn law_sweep(cell: &'static OnceLock<Vec<MetricsRow>>, law: EntryLaw) -> &'static [MetricsRow] {
    cell.get_or_init(|| {
        run_experiment(&rate_config(law)).expect("rate sweep should complete")
    })
}

fn gaussian_sweep() -> &'static [MetricsRow] {
    static CELL: OnceLock<Vec<MetricsRow>> = OnceLock::new();
    law_sweep(&CELL, EntryLaw::Gaussian)
}

fn rademacher_sweep() -> &'static [MetricsRow] {
    static CELL: OnceLock<Vec<MetricsRow>> = OnceLock::new();
    law_sweep(&CELL, EntryLaw::Rademacher)
}

fn uniform_sweep() -> &'static [MetricsRow] {
    static CELL: OnceLock<Vec<MetricsRow>> = OnceLock::new();
    law_sweep(&CELL, EntryLaw::UniformScaled)
}

fn mean_errors_by_n(rows: &[MetricsRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in rows {
        let m = r.metrics.as_ref().expect("no cell should fail");
        match out.iter_mut().find(|(n, _, _)| *n == r.n) {
            Some((_, s, c)) => {
                *s += m.operator_error;
                *c += 1;
            }
            None => out.push((r.n, m.operator_error, 1)),
        }
    }
    out.sort_by_key(|(n, _, _)| *n);
    out.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
}

/// Slope in the acceptance band plus strictly decreasing means; returns
/// the detail fragment either way.
fn check_rate(rows: &[MetricsRow], label: &str) -> (bool, String) {
    let fit = fit_rate(rows).expect("rate fit should succeed");
    let means = mean_errors_by_n(rows);
    let decreasing = means.windows(2).all(|w| w[1].1 < w[0].1);
    let in_band = (-0.65..=-0.35).contains(&fit.slope);
    let mean_str = means
        .iter()
        .map(|(n, e)| format!("{}:{:.3}", n, e))
        .collect::<Vec<_>>()
        .join(" ");
    (
        in_band && decreasing,
        format!(
            "{} slope {:.3} (se {:.3}) in [-0.65, -0.35]: {}, means [{}] strictly decreasing: {}",
            label, fit.slope, fit.stderr, in_band, mean_str, decreasing
        ),
    )
}

/// A population Gram context: exact signal covariance, no noise level.
fn population_gram(a: &SymmetricMatrix) -> CorrectedGram {
    CorrectedGram {
        tr_b_hat: 0.0,
        tau_b_hat: 0.0,
        gamma_hat: a.clone(),
        source_dims: (1000, a.dim()),
    }
}

/// Max-norm error of the assembled estimate against the exact inverse on
/// ten random SPD inputs, with the solver traces kept for the descent
/// criterion.
fn population_recovery(config: &SolverConfig) -> (f64, Vec<Vec<f64>>) {
    let mut worst = 0.0_f64;
    let mut traces = Vec::new();
    for seed in 0..10u64 {
        let dim = 2 + (seed as usize % 5);
        let model = build_model(random_spd(dim, seed), NoiseCov::zero(4), true).unwrap();
        let gram = population_gram(model.a());
        let b1 = 2.0 * model.max_beta_l1();
        let est = estimate_from_gram(
            &gram,
            None,
            &LambdaRule::Fixed(0.0),
            b1,
            config,
            &EstimateOptions::default(),
        )
        .unwrap();
        worst = worst.max(max_abs_diff(&est.theta_tilde, model.theta().dense()));
        traces.extend(est.per_column.iter().filter_map(|c| c.objective_trace.clone()));
    }
    (worst, traces)
}

/// Twenty seeded two-dimensional problems, definite and indefinite mixed.
/// The indefinite ones mirror what trace correction actually produces: a
/// mildly negative curvature direction whose linear pull clears the
/// penalty, so the minimizer is identified rather than merely stationary.
fn two_by_two_problems() -> Vec<LassoProblem> {
    (0..20u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d1 = rng.gen_range(0.8..1.5);
            let off = rng.gen_range(-0.3..0.3);
            let (d2, g2) = if seed % 2 == 1 {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                (rng.gen_range(-0.6..-0.1), sign * rng.gen_range(0.45..1.0))
            } else {
                (rng.gen_range(0.8..1.5), rng.gen_range(-1.0..1.0))
            };
            LassoProblem {
                gram: SymmetricMatrix::from_fn(2, |i, j| {
                    if i != j {
                        off
                    } else if i == 1 {
                        d2
                    } else {
                        d1
                    }
                }),
                target: vec![rng.gen_range(-1.0..1.0), g2],
                lambda: 0.0,
                b1: 0.75,
            }
        })
        .collect()
}

/// Worst objective excess of the solver over exhaustive grid search, with
/// traces kept; also reports the worst single-step objective increase.
fn solver_vs_grid() -> (f64, Vec<Vec<f64>>) {
    let config = SolverConfig {
        record_trace: true,
        ..SolverConfig::default()
    };
    let mut worst_gap = f64::NEG_INFINITY;
    let mut traces = Vec::new();
    for base in two_by_two_problems() {
        for lambda in [0.0, 0.05, 0.3] {
            let problem = LassoProblem {
                lambda,
                ..base.clone()
            };
            let sol = solve_lasso(&problem, &config).unwrap();
            let brute = brute_force_lasso(&problem, 1e-3).unwrap();
            let gap = problem.objective(&sol.beta).unwrap() - problem.objective(&brute).unwrap();
            worst_gap = worst_gap.max(gap);
            traces.push(sol.objective_trace.unwrap());
        }
    }
    (worst_gap, traces)
}

fn worst_trace_increase(traces: &[Vec<f64>]) -> f64 {
    traces
        .iter()
        .flat_map(|t| t.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

// ------------------------------------------------------------- criteria

#[test]
fn criterion_01_population_inputs_recover_the_inverse_exactly() {
    let start = Instant::now();
    let (worst, _) = population_recovery(&SolverConfig::default());
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-6 && elapsed < 1.0,
        format!(
            "10 random SPD targets (dim 2-6): max |Theta_tilde - A^-1| = {:.2e} (<= 1e-6), {:.2}s (< 1s)",
            worst, elapsed
        ),
    );
}

#[test]
fn criterion_02_solver_matches_exhaustive_search() {
    let start = Instant::now();
    let (worst_gap, traces) = solver_vs_grid();
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        worst_gap <= 1e-3 && elapsed < 10.0,
        format!(
            "{} runs (20 problems x 3 penalties): worst objective excess {:.2e} (<= 1e-3), {:.2}s (< 10s)",
            traces.len(),
            worst_gap,
            elapsed
        ),
    );
}

#[test]
fn criterion_03_auto_step_descends_monotonically() {
    // every auto-step trace this suite produces: the exhaustive-search
    // battery, the population solves, and a noisy indefinite fit
    let config = SolverConfig {
        record_trace: true,
        ..SolverConfig::default()
    };
    let (_, mut traces) = solver_vs_grid();
    traces.extend(population_recovery(&config).1);

    let model = build_model(
        ar1_covariance(20, 0.5).unwrap(),
        NoiseCov::scaled_identity(40, 2.0).unwrap(),
        true,
    )
    .unwrap();
    let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 5).unwrap();
    let (_, tau) = estimate_trace_b(&s.x, 20.0).unwrap();
    let est = estimate_theta_with_tau(
        &s.x,
        tau,
        &LambdaRule::Plugin { c0: 0.05, k: 2.0 },
        3.0,
        &config,
        &EstimateOptions {
            clamp_degenerate: true,
        },
    )
    .unwrap();
    traces.extend(est.per_column.iter().filter_map(|c| c.objective_trace.clone()));

    let worst = worst_trace_increase(&traces);
    report(
        3,
        worst <= 1e-12,
        format!(
            "{} recorded traces: worst single-step objective increase {:.2e} (<= 1e-12)",
            traces.len(),
            worst
        ),
    );
}

#[test]
fn criterion_04_operator_error_shrinks_at_the_root_n_rate() {
    let (pass, detail) = check_rate(gaussian_sweep(), "gaussian:");
    report(4, pass, detail);
}

#[test]
fn criterion_05_noise_trace_estimate_is_accurate() {
    let model = build_model(
        SymmetricMatrix::identity(50),
        NoiseCov::scaled_identity(100, 1.0).unwrap(),
        false,
    )
    .unwrap();
    let mut mean_rel = 0.0;
    let reps = 200;
    for seed in 0..reps {
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), seed).unwrap();
        let (tr_b_hat, _) = estimate_trace_b(&s.x, 50.0).unwrap();
        mean_rel += (tr_b_hat - 100.0).abs() / 100.0 / reps as f64;
    }
    report(
        5,
        mean_rel <= 0.05,
        format!(
            "identity factors (n = 100, m = 50), {} reps: mean |tr_hat(B) - 100| / 100 = {:.4} (<= 0.05)",
            reps, mean_rel
        ),
    );
}

#[test]
fn criterion_06_vectorized_covariance_is_the_kronecker_sum() {
    let a = SymmetricMatrix::from_dense(DenseMatrix::new(
        3,
        3,
        vec![1.2, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.8],
    ).unwrap())
    .unwrap();
    let b = SymmetricMatrix::from_dense(DenseMatrix::new(
        3,
        3,
        vec![0.5, 0.2, 0.1, 0.2, 0.6, 0.15, 0.1, 0.15, 0.4],
    ).unwrap())
    .unwrap();
    let model = build_model(a.clone(), NoiseCov::Dense(b.clone()), false).unwrap();
    let (n, m) = (3usize, 3usize);

    let draws = 20_000u64;
    let mut second = vec![0.0_f64; (n * m) * (n * m)];
    for seed in 0..draws {
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), seed).unwrap();
        // column-major vectorization
        let v: Vec<f64> = (0..m)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| s.x.get(i, j))
            .collect();
        for p in 0..v.len() {
            for q in 0..v.len() {
                second[p * n * m + q] += v[p] * v[q] / draws as f64;
            }
        }
    }
    // Cov(vec X) = A (x) I_n + I_m (x) B, indexed (jn + i, j'n + i')
    let mut worst = 0.0_f64;
    for j in 0..m {
        for i in 0..n {
            for jj in 0..m {
                for ii in 0..n {
                    let expected = a.get(j, jj) * (i == ii) as usize as f64
                        + b.get(i, ii) * (j == jj) as usize as f64;
                    let got = second[(j * n + i) * n * m + (jj * n + ii)];
                    worst = worst.max((got - expected).abs());
                }
            }
        }
    }
    report(
        6,
        worst <= 0.1,
        format!(
            "(3, 3) model, {} draws: max |Cov_hat(vec X) - (A (x) I + I (x) B)| = {:.4} (<= 0.1)",
            draws, worst
        ),
    );
}

#[test]
fn criterion_07_psd_repair_is_controlled_wherever_it_fires() {
    // unit noise with a penalty well below the concentration scale:
    // ball-boundary fits and clamped assembly diagonals leave the
    // symmetrized estimate indefinite on most draws
    let (n, m) = (60usize, 30usize);
    let model = build_model(
        banded_precision_covariance(m, 3, 0.3).unwrap(),
        NoiseCov::scaled_identity(n, 1.0).unwrap(),
        true,
    )
    .unwrap();
    let theta = model.theta().dense();
    let mut triggered = 0usize;
    let mut runs = 0usize;
    let mut worst_lambda_min = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for seed in 0..15 {
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), seed).unwrap();
        let (_, tau) = estimate_trace_b(&s.x, m as f64).unwrap();
        let est = estimate_theta_with_tau(
            &s.x,
            tau,
            &LambdaRule::Plugin { c0: 0.01, k: 2.0 },
            3.0,
            &SolverConfig::default(),
            &EstimateOptions {
                clamp_degenerate: true,
            },
        )
        .unwrap();
        runs += 1;
        if !est.repair_triggered {
            continue;
        }
        triggered += 1;
        let lam = eig_sym(&est.theta_psd).unwrap().lambda_min();
        worst_lambda_min = worst_lambda_min.min(lam);
        let err_hat = spectral_norm(&est.theta_hat.dense().sub(&theta).unwrap()).unwrap();
        let err_psd = spectral_norm(&est.theta_psd.dense().sub(&theta).unwrap()).unwrap();
        worst_ratio = worst_ratio.max(err_psd / err_hat);
    }
    report(
        7,
        triggered >= 10 && worst_lambda_min >= -1e-10 && worst_ratio <= 3.0 + 1e-12,
        format!(
            "repair fired {} / {} runs: worst lambda_min(Theta_psd) = {:.2e} (>= -1e-10), worst error ratio {:.3} (<= 3)",
            triggered, runs, worst_lambda_min, worst_ratio
        ),
    );
}

#[test]
fn criterion_08_support_is_recovered_at_n_2000() {
    let rows: Vec<&MetricsRow> = gaussian_sweep().iter().filter(|r| r.n == 2000).collect();
    let mean_f1 = rows
        .iter()
        .map(|r| r.metrics.as_ref().unwrap().support_f1)
        .sum::<f64>()
        / rows.len() as f64;
    report(
        8,
        mean_f1 >= 0.9,
        format!(
            "rate fixture at n = 2000, threshold half the smallest true off-diagonal: mean F1 = {:.3} over {} reps (>= 0.9)",
            mean_f1,
            rows.len()
        ),
    );
}

#[test]
fn criterion_09_replicates_buy_accuracy() {
    let (n, m) = (20usize, 30usize);
    let b = SymmetricMatrix::from_fn(n, |i, j| {
        if i == j {
            1.0
        } else if i.abs_diff(j) == 1 {
            0.25
        } else {
            0.0
        }
    });
    let phi = b.inverse_spd().unwrap();
    let model = build_model(
        ar1_covariance(m, 0.4).unwrap(),
        NoiseCov::Dense(b.clone()),
        true,
    )
    .unwrap();
    let law = SubgaussianSpec::new(EntryLaw::Gaussian);
    let solver = SolverConfig::default();
    let rule = LambdaRule::Plugin { c0: 1.0, k: 2.0 };

    let reps_total = 20usize;
    let mut phi_wins = 0usize;
    let mut theta_wins = 0usize;
    let mut worst_kkt = 0.0_f64;
    for rep in 0..reps_total as u64 {
        let mut phi_err = [0.0_f64; 2];
        for (slot, count) in [(0usize, 20usize), (1, 100)] {
            let reps = sample_replicates(&model, law, count, true, 1000 + rep).unwrap();
            let b_tilde = estimate_b_tilde(&pair_differences(&reps).unwrap().diffs).unwrap();
            let rho = default_glasso_rho(n, count, m);
            let config = GlassoConfig {
                rho,
                ..GlassoConfig::default()
            };
            let phi_hat = glasso(&b_tilde, &config).unwrap();
            worst_kkt = worst_kkt.max(glasso_kkt_residual(&b_tilde, &phi_hat, rho).unwrap());
            phi_err[slot] = phi_hat.dense().sub(phi.dense()).unwrap().frobenius_norm();

            if count == 100 {
                // mean pipeline vs the plain single-sample pipeline on
                // the same replicate set
                let est = estimate_theta_replicates(&reps, &b_tilde, &rule, 3.0, &solver).unwrap();
                let single = {
                    let x = &reps.samples[0];
                    let (_, tau) = estimate_trace_b(x, m as f64).unwrap();
                    estimate_theta_with_tau(
                        x,
                        tau,
                        &rule,
                        3.0,
                        &solver,
                        &EstimateOptions {
                            clamp_degenerate: true,
                        },
                    )
                    .unwrap()
                };
                let err = |e: &kronsum::precision::PrecisionEstimate| {
                    spectral_norm(&e.theta_hat.dense().sub(model.theta().dense()).unwrap()).unwrap()
                };
                if err(&est) < err(&single) {
                    theta_wins += 1;
                }
            }
        }
        if phi_err[1] < phi_err[0] {
            phi_wins += 1;
        }
    }
    report(
        9,
        phi_wins >= 18 && worst_kkt <= 1e-6 && theta_wins >= 16,
        format!(
            "Phi better at N = 100 in {} / 20 (>= 18), worst glasso kkt residual {:.1e} (<= 1e-6), mean pipeline beats single sample in {} / 20 (>= 16)",
            phi_wins, worst_kkt, theta_wins
        ),
    );
}

#[test]
fn criterion_10_row_and_column_pipelines_are_bitwise_dual() {
    let mut all_equal = true;
    for seed in 0..10u64 {
        let model = build_model(
            ar1_covariance(60, 0.3).unwrap(),
            NoiseCov::Dense(SymmetricMatrix::from_fn(8, |i, j| {
                if i == j {
                    1.0
                } else if i.abs_diff(j) == 1 {
                    0.2
                } else {
                    0.0
                }
            })),
            true,
        )
        .unwrap();
        let s = sample(&model, SubgaussianSpec::new(EntryLaw::Gaussian), 100 + seed).unwrap();
        let rule = LambdaRule::Fixed(0.2);
        let config = SolverConfig::default();
        let via_phi = estimate_phi(&s.x, &rule, 1.5, &config).unwrap();
        let via_transpose = estimate_theta_with_tau(
            &s.x.transpose(),
            1.0,
            &rule,
            1.5,
            &config,
            &EstimateOptions::default(),
        )
        .unwrap();
        all_equal &= bits_equal(
            via_phi.theta_tilde.as_slice(),
            via_transpose.theta_tilde.as_slice(),
        ) && bits_equal(
            via_phi.theta_psd.dense().as_slice(),
            via_transpose.theta_psd.dense().as_slice(),
        );
    }
    report(
        10,
        all_equal,
        "10 fixtures: estimate_phi(X) identical to the transposed column pipeline, bit for bit".into(),
    );
}

#[test]
fn criterion_11_guarantees_hold_beyond_the_gaussian_law() {
    // the population, solver, and descent batteries involve no entry law;
    // re-run them unchanged, then repeat the rate check per bounded law
    let (worst_pop, _) = population_recovery(&SolverConfig::default());
    let (worst_gap, traces) = solver_vs_grid();
    let worst_step = worst_trace_increase(&traces);
    let battery_ok = worst_pop <= 1e-6 && worst_gap <= 1e-3 && worst_step <= 1e-12;

    let (rad_ok, rad_detail) = check_rate(rademacher_sweep(), "rademacher:");
    let (uni_ok, uni_detail) = check_rate(uniform_sweep(), "uniform-scaled:");
    report(
        11,
        battery_ok && rad_ok && uni_ok,
        format!(
            "law-free batteries re-passed (pop {:.1e}, gap {:.1e}, step {:.1e}); {}; {}",
            worst_pop, worst_gap, worst_step, rad_detail, uni_detail
        ),
    );
}
