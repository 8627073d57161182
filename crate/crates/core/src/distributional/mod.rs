//! Corpus-level distances: Fréchet distance between Gaussian fits of
//! utterance embeddings (FAD) and of 5-D prosodic vectors (PSD).

mod prosody;

pub use prosody::{npvi, percentile, prosodic_vector, ProsodicVector};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("symmetric eigendecomposition failed")]
    EigenFailure,
    #[error("need at least 2 intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("interval {index} is not positive ({value})")]
    NonPositiveInterval { index: usize, value: f64 },
    #[error("no voiced frames")]
    NoVoicedFrames,
    #[error("need at least {needed} aligned spans with distinct onsets, got {got}")]
    TooFewSpans { needed: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
}

/// Mean and unbiased covariance of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fréchet distance with its decomposition
/// `total = mean_dist² + trace_term`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetResult {
    pub total: f64,
    /// Euclidean distance between the two means.
    pub mean_dist: f64,
    /// `tr(Ca + Cb − 2 (Ca^½ Cb Ca^½)^½)`.
    pub trace_term: f64,
}

impl FrechetResult {
    pub fn from_parts(mean_dist: f64, trace_term: f64) -> Self {
        FrechetResult {
            total: mean_dist * mean_dist + trace_term,
            mean_dist,
            trace_term,
        }
    }
}

/// Sample mean and `N − 1` covariance, symmetrized.
pub fn fit_gaussian(rows: ArrayView2<'_, f64>) -> Result<GaussianSummary, StatsError> {
    let (n, d) = rows.dim();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let x = DMatrix::from_row_iterator(n, d, rows.iter().copied());
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = x;
    for (mut col, m) in centered.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    let mut cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    symmetrize(&mut cov);
    Ok(GaussianSummary { mean, cov, n })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, StatsError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::EigenFailure);
    }
    SymmetricEigen::try_new(m, f64::EPSILON, 100_000).ok_or(StatsError::EigenFailure)
}

/// Square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, StatsError> {
    let eig = eigen(m.clone())?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Fréchet distance between two Gaussians, with `eps·I` added to both
/// covariances.
pub fn frechet(
    a: &GaussianSummary,
    b: &GaussianSummary,
    eps: f64,
) -> Result<FrechetResult, StatsError> {
    if a.dim() != b.dim() {
        return Err(StatsError::DimensionMismatch(a.dim(), b.dim()));
    }
    let d = a.dim();
    let reg = DMatrix::<f64>::identity(d, d) * eps;
    let ca = &a.cov + &reg;
    let cb = &b.cov + &reg;

    let sqrt_a = sqrtm_psd(&ca)?;
    let mut inner = &sqrt_a * &cb * &sqrt_a;
    symmetrize(&mut inner);
    let tr_sqrt: f64 = eigen(inner)?
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();

    let trace_term = (ca.trace() + cb.trace() - 2.0 * tr_sqrt).max(0.0);
    let mean_dist = (&a.mean - &b.mean).norm();
    Ok(FrechetResult::from_parts(mean_dist, trace_term))
}

/// Prosodic signature divergence: Fréchet distance between Gaussian fits
/// of two sets of prosodic vectors. With `zscore`, both sets are first
/// standardized by the native set's per-column mean and standard deviation
/// (columns with zero spread are only centered).
pub fn psd(
    system: ArrayView2<'_, f64>,
    native: ArrayView2<'_, f64>,
    zscore: bool,
    eps: f64,
) -> Result<FrechetResult, StatsError> {
    if system.ncols() != native.ncols() {
        return Err(StatsError::DimensionMismatch(system.ncols(), native.ncols()));
    }
    if zscore {
        let (sys, nat) = standardize_by(system, native)?;
        frechet(&fit_gaussian(sys.view())?, &fit_gaussian(nat.view())?, eps)
    } else {
        frechet(&fit_gaussian(system)?, &fit_gaussian(native)?, eps)
    }
}

fn standardize_by(
    system: ArrayView2<'_, f64>,
    native: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>), StatsError> {
    let n = native.nrows();
    if n < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: n });
    }
    let mean = native.sum_axis(ndarray::Axis(0)) / n as f64;
    let std = native.var_axis(ndarray::Axis(0), 1.0).mapv(f64::sqrt);
    let scale = std.mapv(|s| if s > 0.0 { s } else { 1.0 });
    let f = |m: ArrayView2<'_, f64>| (&m - &mean) / &scale;
    Ok((f(system), f(native)))
}
