//! Convergence-rate experiment: error versus sample size on a seeded grid.
//!
//! Runs the full pipeline over an `n` grid with repetitions, each cell
//! seeded independently from the master seed (so growing the grid never
//! changes existing cells), then fits the log-log slope of mean operator
//! error against `n`. Under the theory the error scales like
//! `sqrt(log m / n)`, i.e. a slope near -1/2.
//!
//! Run with `cargo run --release --example rate_sweep`.

use kronsum::harness::{
    fit_rate, metrics_to_csv, run_experiment, B1Spec, ExperimentConfig, ModelSource, NoiseSource,
};
use kronsum::model::EntryLaw;
use kronsum::precision::LambdaRule;
use kronsum::solver::SolverConfig;
use kronsum::Result;

fn main() -> Result<()> {
    let config = ExperimentConfig {
        model: ModelSource::BandedPrecision {
            m: 30,
            d: 3,
            strength: 0.3,
        },
        noise: NoiseSource::Ar1 {
            rho: 0.3,
            scale: 0.5,
        },
        cap_noise_to_signal: true,
        n_grid: vec![250, 500, 1000, 2000],
        reps: 5,
        lambda: LambdaRule::Oracle { c0: 0.05, k: 2.0 },
        solver: SolverConfig::default(),
        law: EntryLaw::Gaussian,
        b1: B1Spec::Oracle,
        seed: 7,
        timing: false,
        out_dir: None,
    };
    let rows = run_experiment(&config)?;

    println!("n      mean op err   mean F1   cells");
    for &n in &config.n_grid {
        let cell: Vec<_> = rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| r.metrics.as_ref())
            .collect();
        let k = cell.len() as f64;
        println!(
            "{:<6} {:>11.4} {:>9.3} {:>7}",
            n,
            cell.iter().map(|m| m.operator_error).sum::<f64>() / k,
            cell.iter().map(|m| m.support_f1).sum::<f64>() / k,
            cell.len()
        );
    }

    let fit = fit_rate(&rows)?;
    println!(
        "\nlog-log rate: slope {:.3} +- {:.3} over {} sizes (theory: about -0.5)",
        fit.slope, fit.stderr, fit.points
    );

    // the table is plot-ready CSV; print the first rows as a taste
    let csv = metrics_to_csv(&rows);
    for line in csv.lines().take(3) {
        println!("{}", line);
    }
    println!("... {} rows total", rows.len());
    Ok(())
}
