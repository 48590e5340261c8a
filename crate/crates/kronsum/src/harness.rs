//! Experiment engine: named model families, a seeded grid of
//! (sample size x repetition) cells run as an order-independent parallel
//! map, per-cell scoring against the ground truth, and plot-ready CSV.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, parse_err, Result};
use crate::gram::{corrected_gram, estimate_trace_b};
use crate::io::{read_symmetric_csv, write_matrix_csv};
use crate::linalg::{spectral_norm, SymmetricMatrix};
use crate::model::{
    ar1_covariance, banded_precision_covariance, build_model, derive_seed, random_spd, sample,
    CovarianceModel, EntryLaw, NoiseCov, SubgaussianSpec,
};
use crate::precision::{
    estimate_from_gram, oracle_b1, resolve_lambda, ridge_b1, EstimateOptions, LambdaContext,
    LambdaRule,
};
use crate::solver::SolverConfig;

/// Signal covariance family. Every generated matrix is trace-rescaled when
/// the model is built, so the identification convention always holds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSource {
    Identity { m: usize },
    Ar1 { m: usize, rho: f64 },
    /// Inverse of a banded precision matrix with `(d - 1) / 2` bands of
    /// the given strength per side.
    BandedPrecision { m: usize, d: usize, strength: f64 },
    RandomSpd { m: usize, seed: u64 },
    File { path: PathBuf },
}

impl ModelSource {
    pub fn build(&self) -> Result<SymmetricMatrix> {
        match self {
            ModelSource::Identity { m } => Ok(SymmetricMatrix::identity(*m)),
            ModelSource::Ar1 { m, rho } => ar1_covariance(*m, *rho),
            ModelSource::BandedPrecision { m, d, strength } => {
                banded_precision_covariance(*m, *d, *strength)
            }
            ModelSource::RandomSpd { m, seed } => Ok(random_spd(*m, *seed)),
            ModelSource::File { path } => read_symmetric_csv(path),
        }
    }
}

/// Noise covariance family, instantiated per grid point (its dimension is
/// the sample size).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSource {
    Zero,
    ScaledIdentity { scale: f64 },
    Ar1 { rho: f64, scale: f64 },
    File { path: PathBuf },
}

impl NoiseSource {
    /// Build the n x n noise covariance; `cap_op` rescales it down so its
    /// operator norm does not exceed the cap.
    pub fn build(&self, n: usize, cap_op: Option<f64>) -> Result<NoiseCov> {
        let raw = match self {
            NoiseSource::Zero => NoiseCov::zero(n),
            NoiseSource::ScaledIdentity { scale } => NoiseCov::scaled_identity(n, *scale)?,
            NoiseSource::Ar1 { rho, scale } => {
                if !(*scale >= 0.0) {
                    return Err(param_err("scale", format!("{} is not >= 0", scale)));
                }
                NoiseCov::Dense(ar1_covariance(n, *rho)?.scale(*scale))
            }
            NoiseSource::File { path } => {
                let b = read_symmetric_csv(path)?;
                if b.dim() != n {
                    return Err(dim_err(
                        "noise",
                        format!("file noise is {}x{0}, grid point needs {}", b.dim(), n),
                    ));
                }
                NoiseCov::Dense(b)
            }
        };
        let cap = match cap_op {
            Some(c) => c,
            None => return Ok(raw),
        };
        let op = match &raw {
            NoiseCov::Zero { .. } => 0.0,
            NoiseCov::ScaledIdentity { scale, .. } => *scale,
            NoiseCov::Dense(b) => spectral_norm(b.dense())?,
        };
        if op <= cap {
            return Ok(raw);
        }
        let f = cap / op;
        Ok(match raw {
            NoiseCov::Zero { dim } => NoiseCov::Zero { dim },
            NoiseCov::ScaledIdentity { dim, scale } => NoiseCov::ScaledIdentity {
                dim,
                scale: scale * f,
            },
            NoiseCov::Dense(b) => NoiseCov::Dense(b.scale(f)),
        })
    }
}

/// Ball-radius policy for the nodewise solves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum B1Spec {
    /// Ridge pre-solve on the corrected Gram (data-driven).
    #[default]
    Auto,
    /// `1.1 * max_j ||beta_j*||_1` from the ground truth.
    Oracle,
    Value { value: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub noise: NoiseSource,
    /// Rescale the noise so its operator norm never exceeds the signal's
    /// largest eigenvalue.
    #[serde(default)]
    pub cap_noise_to_signal: bool,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub lambda: LambdaRule,
    #[serde(default)]
    pub solver: SolverConfig,
    pub law: EntryLaw,
    #[serde(default)]
    pub b1: B1Spec,
    pub seed: u64,
    /// Record wall time per cell. Off by default so reruns are
    /// bitwise-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMetrics {
    pub operator_error: f64,
    /// Operator error over `||Theta||_2`.
    pub relative_error: f64,
    pub frobenius_error: f64,
    pub max_error: f64,
    pub support_precision: f64,
    pub support_recall: f64,
    pub support_f1: f64,
    /// `|tr_hat(B) - tr(B)| / max(tr(B), 1)`.
    pub trace_b_error: f64,
    pub repair_triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub n: usize,
    pub m: usize,
    /// Largest off-diagonal support count among rows of the true Theta.
    pub d: usize,
    pub rep: usize,
    pub seed: u64,
    /// Present on success; a failed cell records `error` instead.
    pub metrics: Option<CellMetrics>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

/// Entries at or below `1e-8 * max|theta|` count as structural zeros: the
/// true precision matrix is recomputed through an eigendecomposition, so
/// its exact zeros carry rounding dust.
fn zero_floor(theta: &SymmetricMatrix) -> f64 {
    1e-8 * theta.dense().max_abs()
}

/// Half the smallest structurally nonzero off-diagonal magnitude; 0 for a
/// diagonal matrix.
pub fn support_threshold(theta_true: &SymmetricMatrix) -> f64 {
    let dim = theta_true.dim();
    let floor = zero_floor(theta_true);
    let mut smallest = f64::INFINITY;
    for i in 0..dim {
        for j in i + 1..dim {
            let v = theta_true.get(i, j).abs();
            if v > floor {
                smallest = smallest.min(v);
            }
        }
    }
    if smallest.is_finite() {
        smallest / 2.0
    } else {
        0.0
    }
}

fn support_degree(theta_true: &SymmetricMatrix) -> usize {
    let dim = theta_true.dim();
    let floor = zero_floor(theta_true);
    (0..dim)
        .map(|i| {
            (0..dim)
                .filter(|&j| j != i && theta_true.get(i, j).abs() > floor)
                .count()
        })
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Off-diagonal support agreement at a shared magnitude threshold. An
/// empty predicted set scores precision 1, an empty true set recall 1.
pub fn support_metrics(
    theta_hat: &SymmetricMatrix,
    theta_true: &SymmetricMatrix,
    threshold: f64,
) -> Result<SupportMetrics> {
    if theta_hat.dim() != theta_true.dim() {
        return Err(dim_err("support_metrics", "estimate and truth differ"));
    }
    if !(threshold >= 0.0) {
        return Err(param_err("threshold", format!("{} is not >= 0", threshold)));
    }
    let dim = theta_true.dim();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for i in 0..dim {
        for j in i + 1..dim {
            let pred = theta_hat.get(i, j).abs() > threshold;
            let actual = theta_true.get(i, j).abs() > threshold;
            match (pred, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SupportMetrics {
        precision,
        recall,
        f1,
    })
}

fn run_cell(config: &ExperimentConfig, model: &CovarianceModel, n: usize, rep: usize) -> MetricsRow {
    let seed = derive_seed(config.seed, n as u64, rep as u64);
    let started = config.timing.then(Instant::now);
    let outcome = run_cell_inner(config, model, seed);
    let wall_time_s = started.map(|t| t.elapsed().as_secs_f64());
    match outcome {
        Ok(metrics) => MetricsRow {
            n,
            m: model.m(),
            d: support_degree(model.theta()),
            rep,
            seed,
            metrics: Some(metrics),
            wall_time_s,
            error: None,
        },
        Err(e) => error_row(config, n, rep, model.m(), &e),
    }
}

fn error_row(config: &ExperimentConfig, n: usize, rep: usize, m: usize, e: &crate::Error) -> MetricsRow {
    MetricsRow {
        n,
        m,
        d: 0,
        rep,
        seed: derive_seed(config.seed, n as u64, rep as u64),
        metrics: None,
        wall_time_s: None,
        error: Some(sanitize_field(&e.to_string())),
    }
}

fn run_cell_inner(
    config: &ExperimentConfig,
    model: &CovarianceModel,
    seed: u64,
) -> Result<CellMetrics> {
    let m = model.m();
    let s = sample(model, SubgaussianSpec::new(config.law), seed)?;
    let (tr_b_hat, tau) = estimate_trace_b(&s.x, m as f64)?;
    let gram = corrected_gram(&s.x, tau)?;
    let b1 = match config.b1 {
        B1Spec::Auto => ridge_b1(&gram)?,
        B1Spec::Oracle => oracle_b1(model),
        B1Spec::Value { value } => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(param_err("b1", format!("{} is not finite and > 0", value)));
            }
            value
        }
    };
    let lambdas = resolve_lambda(
        &config.lambda,
        &LambdaContext {
            gram: &gram,
            x: Some(&s.x),
            model: Some(model),
            b1,
            solver: &config.solver,
        },
    )?;
    let est = estimate_from_gram(
        &gram,
        Some(&s.x),
        &LambdaRule::PerColumn(lambdas),
        b1,
        &config.solver,
        &EstimateOptions::default(),
    )?;
    score_cell(&est.theta_hat, est.repair_triggered, model, tr_b_hat)
}

fn score_cell(
    theta_hat: &SymmetricMatrix,
    repair_triggered: bool,
    model: &CovarianceModel,
    tr_b_hat: f64,
) -> Result<CellMetrics> {
    let theta = model.theta();
    let diff = theta_hat.dense().sub(theta.dense())?;
    let operator_error = spectral_norm(&diff)?;
    let theta_op = spectral_norm(theta.dense())?;
    let sm = support_metrics(theta_hat, theta, support_threshold(theta))?;
    let tr_b = model.b().trace();
    Ok(CellMetrics {
        operator_error,
        relative_error: operator_error / theta_op,
        frobenius_error: diff.frobenius_norm(),
        max_error: diff.max_abs(),
        support_precision: sm.precision,
        support_recall: sm.recall,
        support_f1: sm.f1,
        trace_b_error: (tr_b_hat - tr_b).abs() / tr_b.max(1.0),
        repair_triggered,
    })
}

/// Run every `(n, rep)` cell of the grid. Each cell derives its own seed
/// from `(master, n, rep)`, so enlarging the grid or the rep count never
/// changes existing cells. Failed cells carry their error in-row and the
/// run continues. Rows come back sorted by `(n, rep)` and, when `out_dir`
/// is set, are also written to `metrics.csv` there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    if config.n_grid.is_empty() {
        return Err(param_err("n_grid", "needs at least one sample size"));
    }
    if config.reps < 1 {
        return Err(param_err("reps", "needs at least one repetition"));
    }
    let a_raw = config.model.build()?;
    let m = a_raw.dim();
    let a_lambda_max = if config.cap_noise_to_signal {
        // probe model: same deterministic trace rescale the cells apply
        Some(build_model(a_raw.clone(), NoiseCov::zero(1), true)?.a_lambda_max())
    } else {
        None
    };
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(config.n_grid.len() * config.reps);
    for &n in &config.n_grid {
        // the model (and its n^3 noise eigendecomposition) is shared by
        // every repetition at this sample size
        let model = config
            .noise
            .build(n, a_lambda_max)
            .and_then(|noise| build_model(a_raw.clone(), noise, true));
        match model {
            Ok(model) => rows.par_extend(
                (0..config.reps)
                    .into_par_iter()
                    .map(|rep| run_cell(config, &model, n, rep)),
            ),
            Err(e) => rows.extend((0..config.reps).map(|rep| error_row(config, n, rep, m, &e))),
        }
    }
    rows.sort_by_key(|r| (r.n, r.rep));
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        write_metrics_csv(dir.join("metrics.csv"), &rows)?;
        // keep the signal matrix next to the metrics for plotting scripts
        write_matrix_csv(dir.join("a.csv"), a_raw.dense())?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Least squares of `log(mean operator error)` on `log(n)` over the
/// successful rows. Needs at least 3 distinct sample sizes.
pub fn fit_rate(rows: &[MetricsRow]) -> Result<RateFit> {
    let mut by_n: Vec<(usize, f64, usize)> = Vec::new();
    for row in rows {
        let Some(m) = &row.metrics else { continue };
        match by_n.iter_mut().find(|(n, _, _)| *n == row.n) {
            Some((_, sum, count)) => {
                *sum += m.operator_error;
                *count += 1;
            }
            None => by_n.push((row.n, m.operator_error, 1)),
        }
    }
    if by_n.len() < 3 {
        return Err(param_err(
            "rows",
            format!("{} distinct sample sizes, need at least 3", by_n.len()),
        ));
    }
    by_n.sort_by_key(|(n, _, _)| *n);
    let mut pts = Vec::with_capacity(by_n.len());
    for (n, sum, count) in &by_n {
        let mean = sum / *count as f64;
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(param_err(
                "rows",
                format!("mean operator error at n = {} is {}", n, mean),
            ));
        }
        pts.push(((*n as f64).ln(), mean.ln()));
    }
    let k = pts.len() as f64;
    let xbar = pts.iter().map(|(x, _)| x).sum::<f64>() / k;
    let ybar = pts.iter().map(|(_, y)| y).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx == 0.0 {
        return Err(param_err("rows", "sample sizes are not distinct"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = pts
        .iter()
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = if pts.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(RateFit {
        slope,
        intercept,
        stderr,
        points: pts.len(),
    })
}

pub const METRICS_HEADER: &str = "n,m,d,rep,seed,operator_error,relative_error,frobenius_error,max_error,support_precision,support_recall,support_f1,trace_b_error,repair_triggered,wall_time_s,error";

/// Error messages become CSV-safe by swapping separators for semicolons;
/// rows are sanitized at construction so in-memory and parsed tables agree.
fn sanitize_field(s: &str) -> String {
    s.replace(['\n', '\r', ','], ";")
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let mut fields: Vec<String> = vec![
            r.n.to_string(),
            r.m.to_string(),
            r.d.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
        ];
        match &r.metrics {
            Some(m) => {
                for v in [
                    m.operator_error,
                    m.relative_error,
                    m.frobenius_error,
                    m.max_error,
                    m.support_precision,
                    m.support_recall,
                    m.support_f1,
                    m.trace_b_error,
                ] {
                    fields.push(format!("{}", v));
                }
                fields.push(m.repair_triggered.to_string());
            }
            None => fields.extend(std::iter::repeat(String::new()).take(9)),
        }
        fields.push(match r.wall_time_s {
            Some(w) => format!("{}", w),
            None => String::new(),
        });
        fields.push(r.error.clone().unwrap_or_default());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<std::path::Path>, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_to_csv(rows))?;
    Ok(())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(parse_err(
                "metrics csv",
                format!("unexpected header {:?}", other),
            ))
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(parse_err(
                "metrics csv",
                format!("line {}: {} fields, expected 16", ln + 2, f.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|e| parse_err("metrics csv", format!("line {}: {}", ln + 2, e)))
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse::<usize>()
                .map_err(|e| parse_err("metrics csv", format!("line {}: {}", ln + 2, e)))
        };
        let metrics = if f[5].is_empty() {
            None
        } else {
            Some(CellMetrics {
                operator_error: num(5)?,
                relative_error: num(6)?,
                frobenius_error: num(7)?,
                max_error: num(8)?,
                support_precision: num(9)?,
                support_recall: num(10)?,
                support_f1: num(11)?,
                trace_b_error: num(12)?,
                repair_triggered: match f[13] {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(parse_err(
                            "metrics csv",
                            format!("line {}: bad flag {:?}", ln + 2, other),
                        ))
                    }
                },
            })
        };
        rows.push(MetricsRow {
            n: int(0)?,
            m: int(1)?,
            d: int(2)?,
            rep: int(3)?,
            seed: f[4]
                .parse::<u64>()
                .map_err(|e| parse_err("metrics csv", format!("line {}: {}", ln + 2, e)))?,
            metrics,
            wall_time_s: if f[14].is_empty() {
                None
            } else {
                Some(num(14)?)
            },
            error: if f[15].is_empty() {
                None
            } else {
                Some(f[15].to_string())
            },
        });
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: impl AsRef<std::path::Path>) -> Result<Vec<MetricsRow>> {
    parse_metrics_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSource::Identity { m: 4 },
            noise: NoiseSource::Zero,
            cap_noise_to_signal: false,
            n_grid: vec![100],
            reps: 1,
            lambda: LambdaRule::Fixed(0.1),
            solver: SolverConfig::default(),
            law: EntryLaw::Gaussian,
            b1: B1Spec::Value { value: 1.0 },
            seed: 5,
            timing: false,
            out_dir: None,
        }
    }

    #[test]
    fn single_cell_identity_run() {
        let rows = run_experiment(&quick_config()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.n, r.m, r.d, r.rep), (100, 4, 0, 0));
        let m = r.metrics.as_ref().expect("cell should succeed");
        assert!(m.operator_error.is_finite() && m.operator_error >= 0.0);
        assert!(m.relative_error <= m.operator_error + 1e-15);
        assert!(r.error.is_none() && r.wall_time_s.is_none());
    }

    #[test]
    fn reruns_are_identical_and_seeds_isolated() {
        let mut config = quick_config();
        config.n_grid = vec![60, 90];
        config.reps = 2;
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
        // more reps leave earlier cells untouched
        config.reps = 3;
        let c = run_experiment(&config).unwrap();
        let keep: Vec<&MetricsRow> = c.iter().filter(|r| r.rep < 2).collect();
        assert_eq!(keep.len(), a.len());
        for (x, y) in a.iter().zip(keep) {
            assert_eq!(x, y);
        }
        // a larger grid leaves shared sample sizes untouched
        config.reps = 2;
        config.n_grid = vec![60, 75, 90];
        let d = run_experiment(&config).unwrap();
        let shared: Vec<&MetricsRow> = d.iter().filter(|r| r.n != 75).collect();
        for (x, y) in a.iter().zip(shared) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn failed_cells_are_recorded_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        crate::io::write_matrix_csv(&path, SymmetricMatrix::identity(50).scale(0.5).dense())
            .unwrap();
        let mut config = quick_config();
        config.noise = NoiseSource::File { path };
        config.n_grid = vec![50, 60];
        let rows = run_experiment(&config).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].metrics.is_some(), "{:?}", rows[0].error);
        assert!(rows[1].metrics.is_none());
        let msg = rows[1].error.as_ref().unwrap();
        assert!(!msg.contains(','), "unsanitized error: {}", msg);
    }

    #[test]
    fn timing_flag_controls_wall_time() {
        let mut config = quick_config();
        config.timing = true;
        let rows = run_experiment(&config).unwrap();
        assert!(rows[0].wall_time_s.unwrap() >= 0.0);
    }

    #[test]
    fn noise_cap_rescales_operator_norm() {
        let src = NoiseSource::Ar1 {
            rho: 0.3,
            scale: 100.0,
        };
        let capped = src.build(20, Some(2.0)).unwrap();
        let op = spectral_norm(capped.to_dense().dense()).unwrap();
        assert!(op <= 2.0 + 1e-9, "operator norm {}", op);
        // under the cap nothing changes
        let small = NoiseSource::ScaledIdentity { scale: 0.5 };
        match small.build(4, Some(2.0)).unwrap() {
            NoiseCov::ScaledIdentity { scale, .. } => assert_eq!(scale, 0.5),
            other => panic!("unexpected {:?}", other),
        }
    }

    fn synthetic_rows(errors: &[(usize, f64)]) -> Vec<MetricsRow> {
        errors
            .iter()
            .enumerate()
            .map(|(i, &(n, e))| MetricsRow {
                n,
                m: 10,
                d: 1,
                rep: i,
                seed: i as u64,
                metrics: Some(CellMetrics {
                    operator_error: e,
                    relative_error: e,
                    frobenius_error: e,
                    max_error: e,
                    support_precision: 1.0,
                    support_recall: 1.0,
                    support_f1: 1.0,
                    trace_b_error: 0.0,
                    repair_triggered: false,
                }),
                wall_time_s: None,
                error: None,
            })
            .collect()
    }

    #[test]
    fn rate_fit_recovers_synthetic_slopes() {
        let rows = synthetic_rows(&[
            (100, 3.0 / 10.0),
            (400, 3.0 / 20.0),
            (1600, 3.0 / 40.0),
            (6400, 3.0 / 80.0),
        ]);
        let fit = fit_rate(&rows).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12, "slope {}", fit.slope);
        assert!(fit.stderr < 1e-10);
        assert_eq!(fit.points, 4);
        let flat = synthetic_rows(&[(100, 2.0), (200, 2.0), (400, 2.0)]);
        let fit = fit_rate(&flat).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        // means are taken per n before fitting
        let mixed = synthetic_rows(&[(100, 1.0), (100, 3.0), (200, 2.0), (400, 2.0)]);
        let fit = fit_rate(&mixed).unwrap();
        assert!(fit.intercept.is_finite());
        // too few distinct sizes
        assert!(fit_rate(&synthetic_rows(&[(100, 1.0), (200, 0.5)])).is_err());
    }

    #[test]
    fn support_metrics_hand_cases() {
        let truth = SymmetricMatrix::from_fn(3, |i, j| {
            if i == j {
                1.0
            } else if i + j == 1 {
                0.4
            } else {
                0.0
            }
        });
        let perfect = support_metrics(&truth, &truth, 0.2).unwrap();
        assert_eq!(
            (perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0)
        );
        let zero = SymmetricMatrix::identity(3);
        let missed = support_metrics(&zero, &truth, 0.2).unwrap();
        assert_eq!((missed.precision, missed.recall, missed.f1), (1.0, 0.0, 0.0));
        // both empty: nothing to find, nothing found
        let both = support_metrics(&zero, &zero, 0.2).unwrap();
        assert_eq!((both.precision, both.recall, both.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn support_threshold_ignores_rounding_dust() {
        let mut theta = SymmetricMatrix::from_fn(4, |i, j| {
            if i == j {
                1.0
            } else if j - i == 1 {
                0.4
            } else {
                0.0
            }
        });
        theta.set_sym(0, 3, 1e-14);
        assert_eq!(support_threshold(&theta), 0.2);
        assert_eq!(support_degree(&theta), 2);
        assert_eq!(support_threshold(&SymmetricMatrix::identity(3)), 0.0);
    }

    #[test]
    fn metrics_csv_round_trips_including_failures() {
        let mut rows = synthetic_rows(&[(100, 0.5), (200, 0.25)]);
        rows[1].metrics.as_mut().unwrap().repair_triggered = true;
        rows[1].wall_time_s = Some(0.125);
        rows.push(MetricsRow {
            n: 300,
            m: 10,
            d: 0,
            rep: 2,
            seed: 9,
            metrics: None,
            wall_time_s: None,
            error: Some(sanitize_field("bad, cell\nfailed")),
        });
        let text = metrics_to_csv(&rows);
        assert!(text.starts_with(METRICS_HEADER));
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(back, rows);
        assert!(parse_metrics_csv("nope\n1,2\n").is_err());
    }

    #[test]
    fn out_dir_receives_the_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = quick_config();
        config.out_dir = Some(dir.path().join("run"));
        let rows = run_experiment(&config).unwrap();
        let back = read_metrics_csv(dir.path().join("run/metrics.csv")).unwrap();
        assert_eq!(back, rows);
        assert!(dir.path().join("run/a.csv").exists());
    }

    #[test]
    fn config_json_round_trip() {
        let config = ExperimentConfig {
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
            n_grid: vec![250, 500],
            reps: 2,
            lambda: LambdaRule::Oracle { c0: 0.1, k: 2.0 },
            solver: SolverConfig::default(),
            law: EntryLaw::Rademacher,
            b1: B1Spec::Oracle,
            seed: 42,
            timing: false,
            out_dir: None,
        };
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.n_grid, config.n_grid);
        assert!(matches!(back.model, ModelSource::BandedPrecision { m: 50, d: 3, .. }));
        assert!(matches!(back.b1, B1Spec::Oracle));
        // minimal config relies on defaults
        let minimal = r#"{
            "model": {"kind": "identity", "m": 3},
            "noise": {"kind": "zero"},
            "n_grid": [50],
            "reps": 1,
            "lambda": {"fixed": 0.1},
            "law": "gaussian",
            "seed": 1
        }"#;
        let parsed: ExperimentConfig = serde_json::from_str(minimal).unwrap();
        assert!(matches!(parsed.b1, B1Spec::Auto));
        assert!(!parsed.timing);
    }
}
