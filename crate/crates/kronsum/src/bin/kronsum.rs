//! Command line front end: simulate draws from a covariance model,
//! estimate precision matrices from saved samples, run the replicate
//! pipelines, sweep experiment grids, and fit convergence-rate slopes.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 numerical
//! failure (non-convergence, degenerate assembly, indefinite input).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kronsum::gram::{corrected_gram, estimate_trace_b};
use kronsum::harness::{fit_rate, read_metrics_csv, run_experiment, ExperimentConfig};
use kronsum::io::{
    read_matrix_csv, read_replicates_dir, read_symmetric_csv, write_estimate_dir,
    write_matrix_csv, write_replicates_dir, write_sample_dir, write_trace_csv,
};
use kronsum::linalg::DenseMatrix;
use kronsum::model::{build_model, sample, EntryLaw, NoiseCov, SubgaussianSpec};
use kronsum::precision::{
    estimate_from_gram, resolve_lambda, ridge_b1, EstimateOptions, LambdaContext, LambdaRule,
};
use kronsum::replicates::{
    default_glasso_rho, estimate_b_tilde, estimate_theta_replicates, glasso, glasso_kkt_residual,
    pair_differences, sample_replicates, GlassoConfig,
};
use kronsum::solver::SolverConfig;
use kronsum::{Error, Result};

#[derive(Parser)]
#[command(
    name = "kronsum",
    version,
    about = "Precision matrix estimation under a Kronecker sum covariance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample (or replicate set) from a covariance model
    Simulate(SimulateArgs),
    /// Estimate the column precision matrix from a saved sample
    Estimate(EstimateArgs),
    /// Estimate the row (noise) precision matrix from a saved sample
    EstimatePhi(EstimatePhiArgs),
    /// Run the paired-difference and mean pipelines on a replicate set
    Replicates(ReplicatesArgs),
    /// Run an experiment grid from a JSON config and write metrics CSV
    Sweep(SweepArgs),
    /// Fit the error-vs-n slope from a metrics CSV
    Rate(RateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Signal covariance CSV (trace-rescaled unless --no-rescale)
    #[arg(long)]
    a: PathBuf,
    /// Dense noise covariance CSV
    #[arg(long, conflicts_with = "noise_scale")]
    b: Option<PathBuf>,
    /// Scaled-identity noise instead of a dense matrix
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Sample rows; required unless --b fixes the dimension
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Entry law: gaussian, rademacher, or uniform-scaled
    #[arg(long, default_value = "gaussian")]
    law: String,
    /// Require tr(A) = m instead of rescaling to it
    #[arg(long)]
    no_rescale: bool,
    /// Draw this many replicates instead of a single sample
    #[arg(long, value_name = "N")]
    replicates: Option<usize>,
    /// Replicates share one signal draw (paired-difference setting)
    #[arg(long, requires = "replicates")]
    shared_signal: bool,
    /// Also write the signal and noise parts (x0.csv, w.csv)
    #[arg(long)]
    keep_parts: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Penalty, radius, and solver flags shared by the estimation commands.
#[derive(Args)]
struct FitArgs {
    /// Penalty rule: a number (fixed), "plugin", or "grid"
    #[arg(long, default_value = "plugin")]
    lambda: String,
    /// Leading constant for plugin and grid rules
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    /// Subgaussian norm bound for plugin and grid rules
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// Ball radius: "auto" (ridge pre-solve) or a number
    #[arg(long, default_value = "auto")]
    b1: String,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Fixed step curvature; derived from the gram matrix when absent
    #[arg(long)]
    eta: Option<f64>,
    /// Clamp non-positive assembly diagonals instead of failing
    #[arg(long)]
    clamp_degenerate: bool,
    /// Write the first column's objective trace to this CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Observation matrix CSV (rows = samples)
    #[arg(long)]
    x: PathBuf,
    /// Signal trace used by the noise correction; defaults to the column count
    #[arg(long)]
    tr_a: Option<f64>,
    /// Known per-entry noise level, skipping the trace estimate
    #[arg(long, conflicts_with = "tr_a")]
    tau: Option<f64>,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimatePhiArgs {
    /// Observation matrix CSV (rows = samples)
    #[arg(long)]
    x: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplicatesArgs {
    /// Replicate directory (manifest.json plus rep_*.csv)
    #[arg(long)]
    dir: PathBuf,
    /// Off-diagonal penalty; defaults to 2 sqrt(log n / (N m))
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-7)]
    glasso_tol: f64,
    /// Also estimate the column precision from the replicate mean
    #[arg(long)]
    theta: bool,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON (model, noise, grid, penalty rule, ...)
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config's value
    #[arg(long)]
    seed: u64,
    /// Output directory for metrics.csv; overrides the config's value
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    /// Metrics CSV produced by sweep
    #[arg(long)]
    metrics: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // help and version are successful outcomes, not usage errors
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{}", e);
                return ExitCode::SUCCESS;
            }
            eprint!("{}", e);
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Estimate(args) => estimate(args),
        Command::EstimatePhi(args) => estimate_phi_cmd(args),
        Command::Replicates(args) => replicates(args),
        Command::Sweep(args) => sweep(args),
        Command::Rate(args) => rate(args),
    }
}

fn invalid(name: &'static str, detail: String) -> Error {
    Error::InvalidParameter {
        name,
        detail,
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let a = read_symmetric_csv(&args.a)?;
    let noise = match (&args.b, args.noise_scale) {
        (Some(path), None) => NoiseCov::Dense(read_symmetric_csv(path)?),
        (None, Some(scale)) => {
            let n = args
                .n
                .ok_or_else(|| invalid("n", "required with --noise-scale".into()))?;
            NoiseCov::scaled_identity(n, scale)?
        }
        (None, None) => {
            let n = args
                .n
                .ok_or_else(|| invalid("n", "required without --b".into()))?;
            NoiseCov::zero(n)
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(n) = args.n {
        if n != noise.dim() {
            return Err(invalid(
                "n",
                format!("{} disagrees with the {}-dim noise", n, noise.dim()),
            ));
        }
    }
    let model = build_model(a, noise, !args.no_rescale)?;
    let spec = SubgaussianSpec::new(EntryLaw::parse(&args.law)?);
    match args.replicates {
        None => {
            let mut s = sample(&model, spec, args.seed)?;
            if !args.keep_parts {
                s.x0 = None;
                s.w = None;
            }
            write_sample_dir(&args.out, &s)?;
            println!(
                "wrote {} x {} sample (seed {}) to {}",
                s.x.rows(),
                s.x.cols(),
                args.seed,
                args.out.display()
            );
        }
        Some(count) => {
            let reps = sample_replicates(&model, spec, count, args.shared_signal, args.seed)?;
            write_replicates_dir(&args.out, &reps)?;
            println!(
                "wrote {} replicates of {} x {} (seed {}) to {}",
                reps.count(),
                reps.n(),
                reps.m(),
                args.seed,
                args.out.display()
            );
        }
    }
    Ok(())
}

fn parse_lambda_rule(fit: &FitArgs) -> Result<LambdaRule> {
    match fit.lambda.as_str() {
        "plugin" => Ok(LambdaRule::Plugin {
            c0: fit.c0,
            k: fit.k,
        }),
        "grid" => Ok(LambdaRule::Grid {
            c0: fit.c0,
            k: fit.k,
        }),
        other => other
            .parse::<f64>()
            .map(LambdaRule::Fixed)
            .map_err(|_| invalid("lambda", format!("'{}' is not plugin, grid, or a number", other))),
    }
}

fn solver_config(fit: &FitArgs, record_trace: bool) -> SolverConfig {
    SolverConfig {
        eta: fit.eta,
        max_iters: fit.max_iters,
        tol: fit.tol,
        record_trace,
    }
}

/// Shared estimation path: corrected gram -> radius -> penalties ->
/// nodewise solves -> estimate directory.
fn fit_and_write(
    x: &DenseMatrix,
    tau: f64,
    fit: &FitArgs,
    out: &std::path::Path,
    label: &str,
) -> Result<()> {
    let gram = corrected_gram(x, tau)?;
    let b1 = match fit.b1.as_str() {
        "auto" => ridge_b1(&gram)?,
        other => other
            .parse::<f64>()
            .map_err(|_| invalid("b1", format!("'{}' is not auto or a number", other)))?,
    };
    let rule = parse_lambda_rule(fit)?;
    let config = solver_config(fit, fit.trace.is_some());
    let lambdas = resolve_lambda(
        &rule,
        &LambdaContext {
            gram: &gram,
            x: Some(x),
            model: None,
            b1,
            solver: &config,
        },
    )?;
    let est = estimate_from_gram(
        &gram,
        Some(x),
        &LambdaRule::PerColumn(lambdas),
        b1,
        &config,
        &EstimateOptions {
            clamp_degenerate: fit.clamp_degenerate,
        },
    )?;
    if let Some(path) = &fit.trace {
        let trace = est.per_column[0]
            .objective_trace
            .as_deref()
            .unwrap_or_default();
        write_trace_csv(path, trace)?;
    }
    write_estimate_dir(out, &est)?;
    let lo = est.lambda_used.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = est.lambda_used.iter().cloned().fold(0.0, f64::max);
    println!(
        "wrote {} x {0} {} to {} (lambda in [{:.4}, {:.4}], b1 {:.4}, repair {})",
        gram.m(),
        label,
        out.display(),
        lo,
        hi,
        b1,
        est.repair_triggered
    );
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let x = read_matrix_csv(&args.x)?;
    let tau = match args.tau {
        Some(tau) => tau,
        None => {
            let tr_a = args.tr_a.unwrap_or(x.cols() as f64);
            estimate_trace_b(&x, tr_a)?.1
        }
    };
    fit_and_write(&x, tau, &args.fit, &args.out, "column precision")
}

fn estimate_phi_cmd(args: EstimatePhiArgs) -> Result<()> {
    // the row problem is the column problem on the transpose with the
    // roles of signal and noise swapped, so the correction level is 1
    let xt = read_matrix_csv(&args.x)?.transpose();
    fit_and_write(&xt, 1.0, &args.fit, &args.out, "row precision")
}

fn replicates(args: ReplicatesArgs) -> Result<()> {
    let reps = read_replicates_dir(&args.dir)?;
    let pd = pair_differences(&reps)?;
    if pd.dropped_last {
        eprintln!("note: odd replicate count, last panel unused by pairing");
    }
    let b_tilde = estimate_b_tilde(&pd.diffs)?;
    let rho = args
        .rho
        .unwrap_or_else(|| default_glasso_rho(reps.n(), reps.count(), reps.m()));
    let config = GlassoConfig {
        rho,
        max_sweeps: args.max_sweeps,
        tol: args.glasso_tol,
    };
    let phi = glasso(&b_tilde, &config)?;
    let residual = glasso_kkt_residual(&b_tilde, &phi, rho)?;
    std::fs::create_dir_all(&args.out)?;
    write_matrix_csv(args.out.join("b_tilde.csv"), b_tilde.dense())?;
    write_matrix_csv(args.out.join("phi_hat.csv"), phi.dense())?;
    let meta = serde_json::json!({
        "N": reps.count(),
        "rho": rho,
        "kkt_residual": residual,
        "dropped_last": pd.dropped_last,
    });
    std::fs::write(
        args.out.join("meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    println!(
        "wrote {} x {0} row precision to {} (rho {:.4}, kkt residual {:.2e})",
        phi.dim(),
        args.out.display(),
        rho,
        residual
    );
    if args.theta {
        let mean = reps.mean();
        let tau = b_tilde.trace() / (reps.n() as f64 * reps.count() as f64);
        let gram = corrected_gram(&mean, tau)?;
        let b1 = match args.fit.b1.as_str() {
            "auto" => ridge_b1(&gram)?,
            other => other
                .parse::<f64>()
                .map_err(|_| invalid("b1", format!("'{}' is not auto or a number", other)))?,
        };
        let est = estimate_theta_replicates(
            &reps,
            &b_tilde,
            &parse_lambda_rule(&args.fit)?,
            b1,
            &solver_config(&args.fit, false),
        )?;
        let theta_dir = args.out.join("theta");
        write_estimate_dir(&theta_dir, &est)?;
        println!(
            "wrote {} x {0} column precision to {} (repair {})",
            est.theta_hat.dim(),
            theta_dir.display(),
            est.repair_triggered
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut config: ExperimentConfig =
        serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    config.seed = args.seed;
    if let Some(out) = args.out {
        config.out_dir = Some(out);
    }
    let rows = run_experiment(&config)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    for &n in &config.n_grid {
        let errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| r.metrics.as_ref().map(|m| m.operator_error))
            .collect();
        if errs.is_empty() {
            println!("n {:>6}: no successful cells", n);
        } else {
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            println!(
                "n {:>6}: mean operator error {:.4} over {} cells",
                n,
                mean,
                errs.len()
            );
        }
    }
    if failed > 0 {
        eprintln!("note: {} of {} cells failed; see the error column", failed, rows.len());
    }
    if let Some(dir) = &config.out_dir {
        println!("wrote {}", dir.join("metrics.csv").display());
    }
    Ok(())
}

fn rate(args: RateArgs) -> Result<()> {
    let rows = read_metrics_csv(&args.metrics)?;
    let fit = fit_rate(&rows)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}
