//! On-disk formats: plain CSV for matrices (one row per line, shortest
//! round-trip float formatting, so write-then-read is bitwise exact) and
//! JSON for metadata. Structured artifacts are directories of both.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Result};
use crate::gram::CorrectedGram;
use crate::linalg::{DenseMatrix, SymmetricMatrix};
use crate::model::{build_model, CovarianceModel, EntryLaw, MatrixSample, NoiseCov};
use crate::precision::PrecisionEstimate;
use crate::replicates::ReplicateSet;

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{}", v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let reader = BufReader::new(fs::File::open(&path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| {
                    parse_err("matrix csv", format!("line {}: {:?}: {}", ln + 1, tok, e))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err("matrix csv", "no rows"));
    }
    DenseMatrix::from_rows(&rows)
}

pub fn read_symmetric_csv(path: impl AsRef<Path>) -> Result<SymmetricMatrix> {
    SymmetricMatrix::from_dense(read_matrix_csv(path)?)
}

/// JSON envelope `{rows, cols, data}` with row-major data, for embedding
/// matrices inside metadata documents.
pub fn matrix_to_json(m: &DenseMatrix) -> serde_json::Value {
    serde_json::json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "data": m.as_slice(),
    })
}

pub fn matrix_from_json(v: &serde_json::Value) -> Result<DenseMatrix> {
    let rows = v["rows"]
        .as_u64()
        .ok_or_else(|| parse_err("matrix json", "missing rows"))? as usize;
    let cols = v["cols"]
        .as_u64()
        .ok_or_else(|| parse_err("matrix json", "missing cols"))? as usize;
    let data: Vec<f64> = serde_json::from_value(v["data"].clone())?;
    DenseMatrix::new(rows, cols, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleMeta {
    seed: u64,
    law: String,
    n: usize,
    m: usize,
    has_signal: bool,
    has_noise: bool,
}

/// Sample directory: `x.csv` plus `meta.json`, with the ground-truth split
/// (`x0.csv`, `w.csv`) included when the sample still carries it.
pub fn write_sample_dir(dir: impl AsRef<Path>, s: &MatrixSample) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join("x.csv"), &s.x)?;
    if let Some(x0) = &s.x0 {
        write_matrix_csv(dir.join("x0.csv"), x0)?;
    }
    if let Some(w) = &s.w {
        write_matrix_csv(dir.join("w.csv"), w)?;
    }
    let meta = SampleMeta {
        seed: s.seed,
        law: s.law.name().to_string(),
        n: s.x.rows(),
        m: s.x.cols(),
        has_signal: s.x0.is_some(),
        has_noise: s.w.is_some(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_sample_dir(dir: impl AsRef<Path>) -> Result<MatrixSample> {
    let dir = dir.as_ref();
    let meta: SampleMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let x = read_matrix_csv(dir.join("x.csv"))?;
    if (x.rows(), x.cols()) != (meta.n, meta.m) {
        return Err(parse_err("sample dir", "x.csv shape disagrees with meta"));
    }
    let x0 = if meta.has_signal {
        Some(read_matrix_csv(dir.join("x0.csv"))?)
    } else {
        None
    };
    let w = if meta.has_noise {
        Some(read_matrix_csv(dir.join("w.csv"))?)
    } else {
        None
    };
    Ok(MatrixSample {
        x,
        x0,
        w,
        seed: meta.seed,
        law: EntryLaw::parse(&meta.law)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct NoiseMeta {
    kind: String,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
}

/// Model directory: `a.csv` plus `noise.json` (and `b.csv` for dense noise).
pub fn write_model_dir(dir: impl AsRef<Path>, model: &CovarianceModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join("a.csv"), model.a().dense())?;
    let meta = match model.b() {
        NoiseCov::Zero { dim } => NoiseMeta {
            kind: "zero".into(),
            dim: *dim,
            scale: None,
        },
        NoiseCov::ScaledIdentity { dim, scale } => NoiseMeta {
            kind: "scaled-identity".into(),
            dim: *dim,
            scale: Some(*scale),
        },
        NoiseCov::Dense(b) => {
            write_matrix_csv(dir.join("b.csv"), b.dense())?;
            NoiseMeta {
                kind: "dense".into(),
                dim: b.dim(),
                scale: None,
            }
        }
    };
    fs::write(dir.join("noise.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_model_dir(dir: impl AsRef<Path>) -> Result<CovarianceModel> {
    let dir = dir.as_ref();
    let a = read_symmetric_csv(dir.join("a.csv"))?;
    let meta: NoiseMeta = serde_json::from_str(&fs::read_to_string(dir.join("noise.json"))?)?;
    let noise = match meta.kind.as_str() {
        "zero" => NoiseCov::zero(meta.dim),
        "scaled-identity" => NoiseCov::scaled_identity(
            meta.dim,
            meta.scale
                .ok_or_else(|| parse_err("noise json", "scaled-identity requires scale"))?,
        )?,
        "dense" => NoiseCov::Dense(read_symmetric_csv(dir.join("b.csv"))?),
        other => {
            return Err(parse_err(
                "noise json",
                format!("unknown noise kind {:?}", other),
            ))
        }
    };
    build_model(a, noise, false)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateMeta {
    pub lambda_used: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub repair_triggered: bool,
}

/// Estimate directory: the three stages as CSV plus per-column solver
/// metadata.
pub fn write_estimate_dir(dir: impl AsRef<Path>, est: &PrecisionEstimate) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_matrix_csv(dir.join("theta_tilde.csv"), &est.theta_tilde)?;
    write_matrix_csv(dir.join("theta_hat.csv"), est.theta_hat.dense())?;
    write_matrix_csv(dir.join("theta_psd.csv"), est.theta_psd.dense())?;
    let meta = EstimateMeta {
        lambda_used: est.lambda_used.clone(),
        iterations: est.per_column.iter().map(|c| c.iterations).collect(),
        converged: est.per_column.iter().map(|c| c.converged).collect(),
        repair_triggered: est.repair_triggered,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_estimate_meta(dir: impl AsRef<Path>) -> Result<EstimateMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(
        dir.as_ref().join("meta.json"),
    )?)?)
}

/// Corrected Gram as a single JSON document.
pub fn write_gram_json(path: impl AsRef<Path>, g: &CorrectedGram) -> Result<()> {
    let doc = serde_json::json!({
        "tr_b_hat": g.tr_b_hat,
        "tau_b_hat": g.tau_b_hat,
        "n": g.source_dims.0,
        "m": g.source_dims.1,
        "gamma_hat": matrix_to_json(g.gamma_hat.dense()),
    });
    fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_gram_json(path: impl AsRef<Path>) -> Result<CorrectedGram> {
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let gamma_hat = SymmetricMatrix::from_dense(matrix_from_json(&doc["gamma_hat"])?)?;
    let field = |name: &'static str| -> Result<f64> {
        doc[name]
            .as_f64()
            .ok_or_else(|| parse_err("gram json", format!("missing {}", name)))
    };
    Ok(CorrectedGram {
        tr_b_hat: field("tr_b_hat")?,
        tau_b_hat: field("tau_b_hat")?,
        source_dims: (field("n")? as usize, field("m")? as usize),
        gamma_hat,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ReplicatesManifest {
    #[serde(rename = "N")]
    count: usize,
    n: usize,
    m: usize,
    shared_signal: bool,
    seed: u64,
    law: String,
    files: Vec<String>,
}

/// Replicate directory: one CSV per replicate plus `manifest.json`.
pub fn write_replicates_dir(dir: impl AsRef<Path>, reps: &ReplicateSet) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(reps.count());
    for (i, s) in reps.samples.iter().enumerate() {
        let name = format!("rep_{:04}.csv", i);
        write_matrix_csv(dir.join(&name), s)?;
        files.push(name);
    }
    let manifest = ReplicatesManifest {
        count: reps.count(),
        n: reps.n(),
        m: reps.m(),
        shared_signal: reps.shared_signal,
        seed: reps.seed,
        law: reps.law.name().to_string(),
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn read_replicates_dir(dir: impl AsRef<Path>) -> Result<ReplicateSet> {
    let dir = dir.as_ref();
    let manifest: ReplicatesManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.files.len() != manifest.count {
        return Err(parse_err(
            "replicates manifest",
            format!(
                "N = {} but {} files listed",
                manifest.count,
                manifest.files.len()
            ),
        ));
    }
    let mut samples = Vec::with_capacity(manifest.count);
    for name in &manifest.files {
        let s = read_matrix_csv(dir.join(name))?;
        if (s.rows(), s.cols()) != (manifest.n, manifest.m) {
            return Err(parse_err(
                "replicates manifest",
                format!("{} has shape {}x{}", name, s.rows(), s.cols()),
            ));
        }
        samples.push(s);
    }
    ReplicateSet::new(
        samples,
        manifest.shared_signal,
        manifest.seed,
        EntryLaw::parse(&manifest.law)?,
    )
}

/// Solver objective trace as plot-ready CSV.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "iteration,objective")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{}", i, v)?;
    }
    out.flush()?;
    Ok(())
}
