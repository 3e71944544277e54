//! Moment-matching targets and the embedding-space attack built on them.
//!
//! Any Gaussian summary `(mu, S)` with eigenpairs `(l_i, u_i)` is matched
//! exactly by the discrete measure putting mass `l_i / (2 tr S)` on each of
//! `mu +- sqrt(tr S) u_i`, so every metric that only sees the first two
//! moments scores it as a perfect fit.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{sample_indices, EmbeddingSet};
use crate::error::{Error, Result};
use crate::linalg::{eigh, summarize, GaussianSummary};
use crate::metric::{Metric, MetricConfig};
use crate::rng::{derive_seed, rng_from, role};

/// Weighted point cloud `{(v_i, pi_i)}` with the `+` points first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointSet {
    /// `2r x d`, row-major.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Distance of every point from the mean.
    pub alpha_scale: f64,
    pub r: usize,
    pub d: usize,
}

impl WeightedPointSet {
    pub fn len(&self) -> usize {
        2 * self.r
    }

    pub fn is_empty(&self) -> bool {
        self.r == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn to_embedding_set(&self) -> Result<EmbeddingSet> {
        EmbeddingSet::new(self.points.clone(), self.len(), self.d)?.with_weights(self.weights.clone())
    }
}

/// Builds `2r` weighted points whose mean and covariance equal `target`'s,
/// `r` being the numerical rank of the covariance.
pub fn moment_match_targets(target: &GaussianSummary) -> Result<WeightedPointSet> {
    let d = target.dim();
    let eig = eigh(target.cov.as_ref(), None)?;
    let r = eig.rank;
    let total: f64 = eig.eigenvalues[..r].iter().sum();
    if r == 0 || !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let alpha = total.sqrt();
    let mut points = vec![0.0; 2 * r * d];
    let mut weights = vec![0.0; 2 * r];
    for i in 0..r {
        let u = eig.eigenvectors.col(i);
        let w = eig.eigenvalues[i] / (2.0 * total);
        weights[i] = w;
        weights[r + i] = w;
        for k in 0..d {
            let step = alpha * u[k];
            points[i * d + k] = target.mean[k] + step;
            points[(r + i) * d + k] = target.mean[k] - step;
        }
    }
    Ok(WeightedPointSet { points, weights, alpha_scale: alpha, r, d })
}

/// Seeded assignment of initial rows to the `k` target slots: a random
/// injection when `n >= k`, otherwise a shuffled cyclic replication.
pub fn assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InsufficientRows { requested: k, available: 0 });
    }
    if n >= k {
        sample_indices(n, k, seed)
    } else {
        let mut idx: Vec<usize> = (0..k).map(|i| i % n).collect();
        idx.shuffle(&mut rng_from(seed));
        Ok(idx)
    }
}

/// Moves assigned initial rows toward the targets: row `i` becomes
/// `(1 - t) x_{s(i)} + t v_i` and carries the target weight `pi_i`.
pub fn embed_attack(initial: &EmbeddingSet, targets: &WeightedPointSet, t: f64, assignment_seed: u64) -> Result<EmbeddingSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("interpolation level must be in [0, 1], got {t}")));
    }
    if initial.d() != targets.d {
        return Err(Error::DimensionMismatch { expected: targets.d, found: initial.d() });
    }
    let k = targets.len();
    let sigma = assignment(initial.n(), k, assignment_seed)?;
    let d = targets.d;
    let mut data = Vec::with_capacity(k * d);
    for (i, &src) in sigma.iter().enumerate() {
        let x = initial.row(src);
        let v = targets.point(i);
        data.extend(x.iter().zip(v).map(|(x, v)| (1.0 - t) * x + t * v));
    }
    EmbeddingSet::new(data, k, d)?.with_weights(targets.weights.clone())
}

/// Metric values along an attack path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub t_grid: Vec<f64>,
    /// Metric name to `Delta(attacked at t, data)` for each `t`.
    pub metrics: BTreeMap<String, Vec<f64>>,
    /// `Delta(attacked at t=1, data) / Delta(initial, data)`.
    pub ratios: BTreeMap<String, f64>,
    pub seeds: AttackSeeds,
    pub configs: Vec<MetricConfig>,
    pub targets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSeeds {
    pub master: u64,
    pub assignment: u64,
}

pub const DEFAULT_T_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn check_grid(t_grid: &[f64]) -> Result<()> {
    let sorted = t_grid.windows(2).all(|w| w[0] < w[1]);
    let in_range = t_grid.iter().all(|t| (0.0..=1.0).contains(t));
    if !sorted || !in_range || t_grid.first() != Some(&0.0) || t_grid.last() != Some(&1.0) {
        return Err(Error::InvalidParameter(
            "t grid must be strictly increasing within [0, 1] and include 0 and 1".into(),
        ));
    }
    Ok(())
}

/// Attacks `initial` toward moment-matching targets fitted to `data` and
/// evaluates every metric against `data` at each level of `t_grid`.
///
/// The `t = 0` entry is the metric of `initial` itself, given explicit
/// uniform weights when its size differs from `data`'s.
pub fn robustness_sweep(
    data: &EmbeddingSet,
    initial: &EmbeddingSet,
    metrics: &[MetricConfig],
    t_grid: &[f64],
    seed: u64,
) -> Result<AttackResult> {
    check_grid(t_grid)?;
    data.ensure_same_dim(initial)?;
    let mut names: Vec<&str> = metrics.iter().map(|m| m.name()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("each metric may appear once per sweep".into()));
    }
    for m in metrics {
        m.validate().map_err(|e| e.in_metric(m.name()))?;
    }

    let targets = moment_match_targets(&summarize(data)?)?;
    let assignment_seed = derive_seed(seed, &[role::ASSIGN]);
    let start = if initial.n() == data.n() || initial.is_weighted() {
        initial.clone()
    } else {
        initial.clone().with_weights(initial.weights_or_uniform())?
    };
    let sets: Vec<EmbeddingSet> = t_grid
        .iter()
        .map(|&t| if t == 0.0 { Ok(start.clone()) } else { embed_attack(initial, &targets, t, assignment_seed) })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..metrics.len()).flat_map(|m| (0..sets.len()).map(move |s| (m, s))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(m, s)| metrics[m].eval(&sets[s], data).map(|v| v.value))
        .collect::<Result<_>>()?;

    let mut by_metric = BTreeMap::new();
    let mut ratios = BTreeMap::new();
    for (m, cfg) in metrics.iter().enumerate() {
        let row = values[m * sets.len()..(m + 1) * sets.len()].to_vec();
        ratios.insert(cfg.name().to_string(), row[row.len() - 1] / row[0]);
        by_metric.insert(cfg.name().to_string(), row);
    }
    Ok(AttackResult {
        t_grid: t_grid.to_vec(),
        metrics: by_metric,
        ratios,
        seeds: AttackSeeds { master: seed, assignment: assignment_seed },
        configs: metrics.to_vec(),
        targets: targets.len(),
    })
}
