//! Ground-truth model: a column covariance `A` (the estimation target is
//! `Theta = A^{-1}`), a row noise covariance `B`, and samplers for
//! `X = Z1 A^{1/2} + B^{1/2} Z2` with independent subgaussian entry arrays
//! `Z1`, `Z2`.
//!
//! `vec(X)` taken column-major then has covariance `A (+) B`, the Kronecker
//! sum `A (x) I_n + I_m (x) B`. The trace convention `tr(A) = m` makes the
//! split identifiable; `build_model` enforces or applies it.
//!
//! All randomness flows through one `u64` seed. `Z1` and `Z2` come from
//! separate streams of a counter-based generator, and batch drivers derive
//! per-task seeds by hashing, never by drawing from a shared generator, so
//! results are reproducible under any execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::linalg::{eig_sym, DenseMatrix, SymmetricMatrix};

/// Distribution of the iid entries of `Z1` and `Z2`. Every law has mean zero
/// and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryLaw {
    Gaussian,
    /// Symmetric signs: -1 or +1 with equal probability.
    Rademacher,
    /// Uniform on [-sqrt(3), sqrt(3)].
    UniformScaled,
}

impl EntryLaw {
    pub fn name(&self) -> &'static str {
        match self {
            EntryLaw::Gaussian => "gaussian",
            EntryLaw::Rademacher => "rademacher",
            EntryLaw::UniformScaled => "uniform-scaled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EntryLaw::Gaussian),
            "rademacher" => Ok(EntryLaw::Rademacher),
            "uniform-scaled" => Ok(EntryLaw::UniformScaled),
            other => Err(param_err("law", format!("unknown entry law '{}'", other))),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.sample(rand_distr::StandardNormal),
            EntryLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::UniformScaled => {
                const SQRT3: f64 = 1.732_050_807_568_877_2;
                rng.gen_range(-SQRT3..SQRT3)
            }
        }
    }
}

/// Entry law plus the subgaussian norm bound `K` recorded with samples.
/// `K = 2` is a valid psi_2 bound for all three laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgaussianSpec {
    pub law: EntryLaw,
    pub k: f64,
}

impl SubgaussianSpec {
    pub fn new(law: EntryLaw) -> Self {
        Self { law, k: 2.0 }
    }
}

/// Row noise covariance. A structured representation instead of a dense
/// matrix: zero and scaled-identity noise appear in settings where `n` is far
/// too large to materialize an `n x n` matrix.
#[derive(Debug, Clone)]
pub enum NoiseCov {
    Zero { dim: usize },
    ScaledIdentity { dim: usize, scale: f64 },
    Dense(SymmetricMatrix),
}

impl NoiseCov {
    pub fn zero(dim: usize) -> Self {
        NoiseCov::Zero { dim }
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(param_err("scale", format!("{} is not >= 0", scale)));
        }
        Ok(NoiseCov::ScaledIdentity { dim, scale })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCov::Zero { dim } | NoiseCov::ScaledIdentity { dim, .. } => *dim,
            NoiseCov::Dense(s) => s.dim(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            NoiseCov::Zero { .. } => 0.0,
            NoiseCov::ScaledIdentity { dim, scale } => *scale * *dim as f64,
            NoiseCov::Dense(s) => s.trace(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            NoiseCov::Zero { .. } => 0.0,
            NoiseCov::ScaledIdentity { scale, .. } => {
                if i == j {
                    *scale
                } else {
                    0.0
                }
            }
            NoiseCov::Dense(s) => s.get(i, j),
        }
    }

    /// Materialize as a dense symmetric matrix. Intended for small `n`.
    pub fn to_dense(&self) -> SymmetricMatrix {
        match self {
            NoiseCov::Dense(s) => s.clone(),
            _ => SymmetricMatrix::from_fn(self.dim(), |i, j| self.get(i, j)),
        }
    }
}

/// Ground-truth Kronecker sum model with the derived quantities the
/// estimators and oracle tuning rules need.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    m: usize,
    n: usize,
    a: SymmetricMatrix,
    b: NoiseCov,
    theta: SymmetricMatrix,
    sqrt_a: SymmetricMatrix,
    /// Dense noise square root; `None` for structured noise.
    sqrt_b: Option<SymmetricMatrix>,
    a_lambda_min: f64,
    a_lambda_max: f64,
    b_op_norm: f64,
}

impl CovarianceModel {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &SymmetricMatrix {
        &self.a
    }

    pub fn b(&self) -> &NoiseCov {
        &self.b
    }

    /// `Theta = A^{-1}`, the column precision matrix.
    pub fn theta(&self) -> &SymmetricMatrix {
        &self.theta
    }

    pub fn sqrt_a(&self) -> &SymmetricMatrix {
        &self.sqrt_a
    }

    pub fn a_lambda_min(&self) -> f64 {
        self.a_lambda_min
    }

    pub fn a_lambda_max(&self) -> f64 {
        self.a_lambda_max
    }

    /// Largest diagonal entry of `A`.
    pub fn a_max_diag(&self) -> f64 {
        self.a.diag().into_iter().fold(f64::MIN, f64::max)
    }

    pub fn b_op_norm(&self) -> f64 {
        self.b_op_norm
    }

    /// `tau_B = tr(B) / n`.
    pub fn tau_b(&self) -> f64 {
        self.b.trace() / self.n as f64
    }

    /// `Phi = B^{-1}`, the row precision matrix. Requires SPD noise; computed
    /// on demand because dense noise can be large and `Phi` is only scored on
    /// small fixtures.
    pub fn phi(&self) -> Result<SymmetricMatrix> {
        match &self.b {
            NoiseCov::Zero { .. } => Err(Error::NotPositiveDefinite {
                lambda_min: 0.0,
                floor: 0.0,
            }),
            NoiseCov::ScaledIdentity { dim, scale } => {
                if *scale <= 0.0 {
                    return Err(Error::NotPositiveDefinite {
                        lambda_min: *scale,
                        floor: 0.0,
                    });
                }
                Ok(SymmetricMatrix::identity(*dim).scale(1.0 / *scale))
            }
            NoiseCov::Dense(s) => s.inverse_spd(),
        }
    }

    /// Swap the roles of signal and noise: the returned model has signal
    /// covariance `B` (so its `theta()` is `Phi`) and noise covariance `A`.
    /// No trace normalization applies to the swapped signal.
    pub fn transposed(&self) -> Result<CovarianceModel> {
        let b_dense = match &self.b {
            NoiseCov::Zero { .. } => {
                return Err(param_err("b", "zero noise has no precision matrix"))
            }
            other => other.to_dense(),
        };
        let eig_b = eig_sym(&b_dense)?;
        let floor = 1e-10 * eig_b.lambda_max().max(0.0);
        if !(eig_b.lambda_min() > floor) {
            return Err(Error::NotPositiveDefinite {
                lambda_min: eig_b.lambda_min(),
                floor,
            });
        }
        let eig_a = eig_sym(&self.a)?;
        Ok(CovarianceModel {
            m: self.n,
            n: self.m,
            a: b_dense.clone(),
            b: NoiseCov::Dense(self.a.clone()),
            theta: eig_b.recompose(|l| 1.0 / l),
            sqrt_a: eig_b.recompose(f64::sqrt),
            sqrt_b: Some(self.sqrt_a.clone()),
            a_lambda_min: eig_b.lambda_min(),
            a_lambda_max: eig_b.lambda_max(),
            b_op_norm: eig_a.lambda_max().max(0.0),
        })
    }

    /// Population regression of column `j` on the rest:
    /// `beta_k = -theta_jk / theta_jj` (for `k != j`, in index order) and the
    /// residual variance `sigma^2 = 1 / theta_jj`.
    pub fn population_regression(&self, j: usize) -> Result<(Vec<f64>, f64)> {
        if j >= self.m {
            return Err(param_err("j", format!("column {} out of range", j)));
        }
        let tjj = self.theta.get(j, j);
        let beta = (0..self.m)
            .filter(|&k| k != j)
            .map(|k| -self.theta.get(j, k) / tjj)
            .collect();
        Ok((beta, 1.0 / tjj))
    }

    /// Largest l1 norm among the population regression vectors.
    pub fn max_beta_l1(&self) -> f64 {
        (0..self.m)
            .map(|j| {
                let (beta, _) = self.population_regression(j).unwrap();
                crate::linalg::l1_norm(&beta)
            })
            .fold(0.0, f64::max)
    }
}

/// Build a model from a raw signal covariance and a noise covariance.
///
/// With `rescale` the signal is multiplied by `m / tr(A_raw)`; otherwise
/// `tr(A_raw)` must already equal `m` within `1e-8`. `A` must be SPD; `B`
/// may be any PSD noise (including zero).
pub fn build_model(a_raw: SymmetricMatrix, b: NoiseCov, rescale: bool) -> Result<CovarianceModel> {
    let m = a_raw.dim();
    if m < 2 {
        return Err(param_err("a", "signal dimension must be >= 2"));
    }
    let n = b.dim();
    if n < 1 {
        return Err(param_err("b", "noise dimension must be >= 1"));
    }
    let tr = a_raw.trace();
    let a = if rescale {
        if !(tr > 0.0) {
            return Err(param_err("a", format!("trace {} is not positive", tr)));
        }
        a_raw.scale(m as f64 / tr)
    } else {
        if (tr - m as f64).abs() > 1e-8 {
            return Err(param_err(
                "a",
                format!("trace {} differs from {} by more than 1e-8", tr, m),
            ));
        }
        a_raw
    };
    let eig_a = eig_sym(&a)?;
    let floor = 1e-10 * eig_a.lambda_max().max(0.0);
    if !(eig_a.lambda_min() > floor) {
        return Err(Error::NotPositiveDefinite {
            lambda_min: eig_a.lambda_min(),
            floor,
        });
    }
    let (sqrt_b, b_op_norm) = match &b {
        NoiseCov::Zero { .. } => (None, 0.0),
        NoiseCov::ScaledIdentity { scale, .. } => (None, *scale),
        NoiseCov::Dense(s) => {
            let eig_b = eig_sym(s)?;
            let tol = 1e-10 * eig_b.lambda_max().max(0.0);
            if eig_b.lambda_min() < -tol {
                return Err(Error::NotPositiveDefinite {
                    lambda_min: eig_b.lambda_min(),
                    floor: -tol,
                });
            }
            (
                Some(eig_b.recompose(|l| l.max(0.0).sqrt())),
                eig_b.lambda_max().max(0.0),
            )
        }
    };
    Ok(CovarianceModel {
        m,
        n,
        theta: eig_a.recompose(|l| 1.0 / l),
        sqrt_a: eig_a.recompose(f64::sqrt),
        a,
        b,
        sqrt_b,
        a_lambda_min: eig_a.lambda_min(),
        a_lambda_max: eig_a.lambda_max(),
        b_op_norm,
    })
}

/// One draw of the model: the observation `X` and, for diagnostics, the
/// signal part `X0 = Z1 A^{1/2}` and noise part `W = B^{1/2} Z2` with
/// `X = X0 + W` exactly.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub x: DenseMatrix,
    pub x0: Option<DenseMatrix>,
    pub w: Option<DenseMatrix>,
    pub seed: u64,
    pub law: EntryLaw,
}

impl MatrixSample {
    /// Drop the ground-truth decomposition, keeping only the observation.
    pub fn observed_only(mut self) -> Self {
        self.x0 = None;
        self.w = None;
        self
    }
}

/// Generator seeded for one purpose: `seed` selects the key, `stream` the
/// independent stream. Streams never overlap for distinct stream ids.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix_step(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for subtask `(a, b)` of a master seed.
/// Pure hashing: derivation for one subtask never consumes randomness
/// belonging to another, so adding tasks does not shift existing ones.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix_step(splitmix_step(master ^ a.wrapping_mul(0xA076_1D64_78BD_642F)) ^ b)
}

fn draw_matrix(rows: usize, cols: usize, law: EntryLaw, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = law.draw(rng);
    }
    m
}

/// `X0 = Z1 A^{1/2}` from the given generator.
pub(crate) fn draw_signal(
    model: &CovarianceModel,
    law: EntryLaw,
    rng: &mut ChaCha8Rng,
) -> Result<DenseMatrix> {
    let z1 = draw_matrix(model.n, model.m, law, rng);
    z1.matmul(model.sqrt_a.dense())
}

/// `W = B^{1/2} Z2` from the given generator. Degenerate noise skips the
/// draw entirely, which is stream-safe because every draw site owns its
/// own stream.
pub(crate) fn draw_noise(
    model: &CovarianceModel,
    law: EntryLaw,
    rng: &mut ChaCha8Rng,
) -> Result<DenseMatrix> {
    let (n, m) = (model.n, model.m);
    Ok(match &model.b {
        NoiseCov::Zero { .. } => DenseMatrix::zeros(n, m),
        NoiseCov::ScaledIdentity { scale, .. } => {
            if *scale == 0.0 {
                DenseMatrix::zeros(n, m)
            } else {
                draw_matrix(n, m, law, rng).scale(scale.sqrt())
            }
        }
        NoiseCov::Dense(_) => {
            let z2 = draw_matrix(n, m, law, rng);
            model
                .sqrt_b
                .as_ref()
                .expect("dense noise always has a cached square root")
                .dense()
                .matmul(&z2)?
        }
    })
}

/// Draw `X = Z1 A^{1/2} + B^{1/2} Z2`. `Z1` uses stream 0 of the seed, `Z2`
/// stream 1; rerunning with the same seed reproduces `X` bitwise.
pub fn sample(model: &CovarianceModel, spec: SubgaussianSpec, seed: u64) -> Result<MatrixSample> {
    let x0 = draw_signal(model, spec.law, &mut stream_rng(seed, 0))?;
    let w = draw_noise(model, spec.law, &mut stream_rng(seed, 1))?;
    let x = x0.add(&w)?;
    Ok(MatrixSample {
        x,
        x0: Some(x0),
        w: Some(w),
        seed,
        law: spec.law,
    })
}

/// AR(1) correlation matrix: entries `rho^{|i-j|}`. Unit diagonal, so the
/// trace convention holds without rescaling.
pub fn ar1_covariance(dim: usize, rho: f64) -> Result<SymmetricMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(param_err("rho", format!("|{}| must be < 1", rho)));
    }
    Ok(SymmetricMatrix::from_fn(dim, |i, j| {
        rho.powi((j as i32 - i as i32).abs())
    }))
}

/// Banded precision matrix with unit diagonal and `strength` on the first
/// `(d - 1) / 2` off-diagonals; `d` is the number of nonzeros per interior
/// column (odd, `>= 3`). `d = 3` is tridiagonal.
pub fn banded_precision(dim: usize, d: usize, strength: f64) -> Result<SymmetricMatrix> {
    if d < 3 || d % 2 == 0 || d > 2 * dim - 1 {
        return Err(param_err(
            "d",
            format!("{} is not an odd band count in [3, 2*dim-1]", d),
        ));
    }
    let half = (d - 1) / 2;
    Ok(SymmetricMatrix::from_fn(dim, |i, j| {
        if i == j {
            1.0
        } else if j - i <= half {
            strength
        } else {
            0.0
        }
    }))
}

/// Signal covariance whose precision matrix is the banded matrix above,
/// scaled afterwards so `tr(A) = dim`. Returns the model-ready `A`.
pub fn banded_precision_covariance(dim: usize, d: usize, strength: f64) -> Result<SymmetricMatrix> {
    let theta = banded_precision(dim, d, strength)?;
    let a_raw = theta.inverse_spd()?;
    let tr = a_raw.trace();
    Ok(a_raw.scale(dim as f64 / tr))
}

/// Random SPD matrix `G G^T / dim + 0.25 I` with `G` entries uniform on
/// [-1, 1], rescaled to `tr = dim`.
pub fn random_spd(dim: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = stream_rng(seed, 7);
    let g = DenseMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let gg = crate::linalg::gram(&g, 1.0 / dim as f64);
    let raw = SymmetricMatrix::from_fn(dim, |i, j| gg.get(i, j) + if i == j { 0.25 } else { 0.0 });
    let tr = raw.trace();
    raw.scale(dim as f64 / tr)
}
