//! Moment-based distances: FID, mean-only FID and sliced FID.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{summarize, trace, GaussianSummary, SqrtFactor};
use crate::ot::projection::{map_blocks, Directions};
use crate::ot::ProjectionSet;

/// Fréchet distance between fitted Gaussians with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    /// `raw` clamped at zero.
    pub value: f64,
    pub raw: f64,
    pub mean_term: f64,
    pub trace_term: f64,
    /// Set when either set has no more distinct support points than `d`.
    pub rank_deficient: bool,
}

impl FidResult {
    pub fn clamped(&self) -> bool {
        self.raw < 0.0
    }
}

/// Weighted mean of the rows.
pub fn mean_vector(set: &EmbeddingSet) -> Vec<f64> {
    let mut mean = vec![0.0; set.d()];
    match set.weights() {
        None => {
            for row in set.rows() {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            let inv = 1.0 / set.n() as f64;
            mean.iter_mut().for_each(|m| *m *= inv);
        }
        Some(w) => {
            for (row, wi) in set.rows().zip(w) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += wi * x;
                }
            }
        }
    }
    mean
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Summary of a reference set with the square root of its covariance,
/// reusable across many FID evaluations.
#[derive(Debug, Clone)]
pub struct FidReference {
    pub summary: GaussianSummary,
    root: SqrtFactor,
    trace: f64,
}

impl FidReference {
    pub fn new(summary: GaussianSummary) -> Result<Self> {
        let root = SqrtFactor::new(summary.cov.as_ref())?;
        let trace = trace(summary.cov.as_ref());
        Ok(Self { summary, root, trace })
    }

    pub fn from_set(set: &EmbeddingSet) -> Result<Self> {
        Self::new(summarize(set)?)
    }

    /// FID between the reference and another Gaussian summary.
    pub fn fid_to(&self, other: &GaussianSummary) -> Result<FidResult> {
        let d = self.summary.dim();
        if other.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: other.dim() });
        }
        let mean_term = sq_diff(&self.summary.mean, &other.mean);
        let cross = self.root.trace_sqrt_with(&SqrtFactor::new(other.cov.as_ref())?)?;
        let trace_term = self.trace + trace(other.cov.as_ref()) - 2.0 * cross;
        let raw = mean_term + trace_term;
        if !raw.is_finite() {
            return Err(Error::NonFiniteIntermediate("fid"));
        }
        if raw < 0.0 {
            log::warn!("fid evaluated to {raw:.3e}; clamped to 0");
        }
        Ok(FidResult { value: raw.max(0.0), raw, mean_term, trace_term, rank_deficient: false })
    }

    /// FID between the reference and an embedding set.
    pub fn fid_to_set(&self, reference: &EmbeddingSet, other: &EmbeddingSet) -> Result<FidResult> {
        reference.ensure_same_dim(other)?;
        let mut r = self.fid_to(&summarize(other)?)?;
        r.rank_deficient = is_rank_deficient(reference) || is_rank_deficient(other);
        Ok(r)
    }
}

fn is_rank_deficient(set: &EmbeddingSet) -> bool {
    set.support_size() <= set.d()
}

/// FID from two Gaussian summaries.
pub fn fid_from_summaries(a: &GaussianSummary, b: &GaussianSummary) -> Result<FidResult> {
    FidReference::new(a.clone())?.fid_to(b)
}

/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})`.
///
/// Small negative values from rounding are clamped to zero; `raw` keeps the
/// unclamped number.
pub fn fid(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<FidResult> {
    a.ensure_same_dim(b)?;
    FidReference::from_set(a)?.fid_to_set(a, b)
}

/// `||mu_a - mu_b||^2`.
pub fn mu_fid(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    a.ensure_same_dim(b)?;
    Ok(sq_diff(&mean_vector(a), &mean_vector(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaFidConfig {
    pub projections: usize,
    pub seed: u64,
}

impl Default for SigmaFidConfig {
    fn default() -> Self {
        Self { projections: 1000, seed: 0 }
    }
}

impl SigmaFidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projections == 0 {
            return Err(Error::InvalidParameter("projection count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weighted mean and population standard deviation of one projected column.
fn column_moments(col: &[f64], weights: Option<&[f64]>) -> (f64, f64) {
    match weights {
        None => {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        }
        Some(w) => {
            let mean = col.iter().zip(w).map(|(x, w)| w * x).sum::<f64>();
            let var = col.iter().zip(w).map(|(x, w)| w * (x - mean) * (x - mean)).sum::<f64>();
            (mean, var.sqrt())
        }
    }
}

fn check_sigma_inputs(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    a.ensure_same_dim(b)?;
    for s in [a, b] {
        if !s.is_weighted() && s.n() < 2 {
            return Err(Error::TooFewSamples { n: s.n() });
        }
    }
    Ok(())
}

fn sigma_fid_dirs(a: &EmbeddingSet, b: &EmbeddingSet, dirs: Directions<'_>) -> f64 {
    let blocks = map_blocks(&[a, b], dirs, |proj: &[Mat<f64>]| {
        (0..proj[0].ncols())
            .map(|c| {
                let (ma, sa) = column_moments(proj[0].col_as_slice(c), a.weights());
                let (mb, sb) = column_moments(proj[1].col_as_slice(c), b.weights());
                (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb)
            })
            .collect::<Vec<f64>>()
    });
    let m = dirs.count() as f64;
    blocks.iter().flatten().sum::<f64>() / m
}

/// Average over random directions `u` of `(u.dmu)^2 + (sd(u.A) - sd(u.B))^2`.
pub fn sigma_fid(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &SigmaFidConfig) -> Result<f64> {
    cfg.validate()?;
    check_sigma_inputs(a, b)?;
    Ok(sigma_fid_dirs(a, b, Directions::Seeded { seed: cfg.seed, m: cfg.projections }))
}

/// Sliced FID along explicit directions.
pub fn sigma_fid_with(a: &EmbeddingSet, b: &EmbeddingSet, proj: &ProjectionSet) -> Result<f64> {
    check_sigma_inputs(a, b)?;
    if proj.d() != a.d() {
        return Err(Error::DimensionMismatch { expected: a.d(), found: proj.d() });
    }
    Ok(sigma_fid_dirs(a, b, Directions::Given(proj)))
}
