//! Moment estimation and symmetric positive semi-definite linear algebra.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// Rows processed per covariance update.
const COV_CHUNK: usize = 256;

/// Mean and covariance of an embedding set.
#[derive(Debug, Clone)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: Mat<f64>,
    pub n_source: usize,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: Mat<f64>, n_source: usize) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: cov.nrows() });
        }
        if mean.iter().any(|v| !v.is_finite()) || !all_finite(cov.as_ref()) {
            return Err(Error::NonFiniteIntermediate("gaussian summary"));
        }
        Ok(Self { mean, cov: symmetrize(cov.as_ref()), n_source })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Weighted mean and population covariance, two-pass.
///
/// Unweighted sets use the `1/n` normalization and need `n >= 2`.
pub fn summarize(set: &EmbeddingSet) -> Result<GaussianSummary> {
    let (n, d) = (set.n(), set.d());
    if !set.is_weighted() && n < 2 {
        return Err(Error::TooFewSamples { n });
    }
    let weights = set.weights();
    if let Some(w) = weights {
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter("all weights are zero".into()));
        }
    }

    let mut mean = vec![0.0; d];
    match weights {
        None => {
            for row in set.rows() {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            let inv = 1.0 / n as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        }
        Some(w) => {
            for (row, &wi) in set.rows().zip(w) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += wi * x;
                }
            }
        }
    }

    let mut cov = Mat::<f64>::zeros(d, d);
    let mut buf = vec![0.0; COV_CHUNK.min(n) * d];
    let alpha = if weights.is_none() { 1.0 / n as f64 } else { 1.0 };
    let mut start = 0;
    while start < n {
        let rows = COV_CHUNK.min(n - start);
        for r in 0..rows {
            let i = start + r;
            let scale = weights.map_or(1.0, |w| w[i].sqrt());
            let dst = &mut buf[r * d..(r + 1) * d];
            for ((o, x), m) in dst.iter_mut().zip(set.row(i)).zip(&mean) {
                *o = scale * (x - m);
            }
        }
        let chunk = MatRef::from_row_major_slice(&buf[..rows * d], rows, d);
        matmul(cov.as_mut(), Accum::Add, chunk.transpose(), chunk, alpha, Par::Seq);
        start += rows;
    }
    GaussianSummary::new(mean, cov, n)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: Mat<f64>,
    /// Number of eigenvalues above the rank tolerance.
    pub rank: usize,
}

pub fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// `(S + S^T) / 2`.
pub fn symmetrize(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn all_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

/// Scale-relative rank tolerance, `1e-10 * tr(S)`.
pub fn default_rank_tol(s: MatRef<'_, f64>) -> f64 {
    1e-10 * trace(s).max(0.0)
}

/// Symmetric eigen-decomposition.
///
/// The input is symmetrized first. Eigenvalues in `(-rank_tol, 0)` are
/// clamped to zero; `rank_tol` defaults to [`default_rank_tol`].
pub fn eigh(s: MatRef<'_, f64>, rank_tol: Option<f64>) -> Result<EigenDecomposition> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch { expected: s.nrows(), found: s.ncols() });
    }
    if !all_finite(s) {
        return Err(Error::NonFiniteIntermediate("eigh input"));
    }
    let d = s.nrows();
    let sym = symmetrize(s);
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(sym.as_ref()));
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigendecomposition failed: {e:?}")))?;
    let (u, vals) = (evd.U(), evd.S().column_vector());
    // faer returns ascending order
    let eigenvalues: Vec<f64> = (0..d)
        .rev()
        .map(|k| {
            let l = vals[k];
            if l < 0.0 && l > -tol {
                0.0
            } else {
                l
            }
        })
        .collect();
    let eigenvectors = Mat::from_fn(d, d, |i, j| u[(i, d - 1 - j)]);
    if eigenvalues.iter().any(|l| !l.is_finite()) || !all_finite(eigenvectors.as_ref()) {
        return Err(Error::NonFiniteIntermediate("eigh output"));
    }
    let rank = eigenvalues.iter().filter(|&&l| l > tol).count();
    Ok(EigenDecomposition { eigenvalues, eigenvectors, rank })
}

/// Principal square root `U diag(sqrt(max(l, 0))) U^T` of a PSD matrix.
pub fn sqrtm_psd(s: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let evd = eigh(s, None)?;
    let d = s.nrows();
    // B B^T with B = U diag(l^{1/4})
    let quarter: Vec<f64> = evd.eigenvalues.iter().map(|&l| l.max(0.0).sqrt().sqrt()).collect();
    let b = Mat::from_fn(d, d, |i, j| evd.eigenvectors[(i, j)] * quarter[j]);
    let mut out = Mat::<f64>::zeros(d, d);
    matmul(out.as_mut(), Accum::Replace, b.as_ref(), b.transpose(), 1.0, Par::Seq);
    Ok(out)
}

/// Square root of a PSD matrix, reusable across several cross-term
/// evaluations.
#[derive(Debug, Clone)]
pub struct SqrtFactor {
    root: Mat<f64>,
}

impl SqrtFactor {
    pub fn new(s: MatRef<'_, f64>) -> Result<Self> {
        Ok(Self { root: sqrtm_psd(s)? })
    }

    pub fn root(&self) -> MatRef<'_, f64> {
        self.root.as_ref()
    }

    /// `tr((Ra Sb Ra)^{1/2})` with `Ra` this root and `Sb = Rb^2`, computed as
    /// the nuclear norm of `Ra Rb`.
    pub fn trace_sqrt_with(&self, other: &SqrtFactor) -> Result<f64> {
        let d = self.root.nrows();
        if other.root.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, found: other.root.nrows() });
        }
        let mut prod = Mat::<f64>::zeros(d, d);
        matmul(prod.as_mut(), Accum::Replace, self.root.as_ref(), other.root.as_ref(), 1.0, Par::Seq);
        if !all_finite(prod.as_ref()) {
            return Err(Error::NonFiniteIntermediate("trace_sqrt_product"));
        }
        let sv = prod.singular_values().map_err(|e| Error::Linalg(format!("singular value solve failed: {e:?}")))?;
        let total: f64 = sv.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFiniteIntermediate("trace_sqrt_product"));
        }
        Ok(total)
    }
}

/// `tr((Sy^{1/2} Sx Sy^{1/2})^{1/2})`, the cross term of the Fréchet distance.
pub fn trace_sqrt_product(sx: MatRef<'_, f64>, sy: MatRef<'_, f64>) -> Result<f64> {
    SqrtFactor::new(sy)?.trace_sqrt_with(&SqrtFactor::new(sx)?)
}
