//! Sliced Wasserstein estimator and the MIND metric built on it.

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::one_dim::{sort_values, sort_weighted, w2_sorted, w2_sorted_weighted};
use super::projection::{map_blocks, Directions, ProjectionSet};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// Multiplicative scale of MIND.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alpha {
    /// `3 * d`.
    Auto,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MindConfig {
    pub projections: usize,
    pub alpha: Alpha,
    pub seed: u64,
}

impl Default for MindConfig {
    fn default() -> Self {
        Self { projections: 1000, alpha: Alpha::Auto, seed: 0 }
    }
}

impl MindConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projections == 0 {
            return Err(Error::InvalidParameter("projection count must be >= 1".into()));
        }
        if let Alpha::Explicit(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("alpha must be positive, got {a}")));
            }
        }
        Ok(())
    }

    pub fn alpha_for(&self, d: usize) -> f64 {
        match self.alpha {
            Alpha::Auto => 3.0 * d as f64,
            Alpha::Explicit(a) => a,
        }
    }
}

/// Neumaier-compensated sum in slice order.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Monte-Carlo average over directions with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub projections: usize,
}

impl SlicedEstimate {
    fn from_costs(costs: &[f64]) -> Self {
        let m = costs.len() as f64;
        let mean = compensated_sum(costs) / m;
        let var = if costs.len() > 1 {
            costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        Self { value: mean, std_error: (var / m).sqrt(), projections: costs.len() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MindResult {
    pub value: f64,
    pub alpha: f64,
    pub sliced: SlicedEstimate,
    pub seed: u64,
}

/// One projected column, sorted, with weights when the set is weighted.
struct Sorted {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

fn sort_column(col: &[f64], set: &EmbeddingSet) -> Sorted {
    match set.weights() {
        None => {
            let mut values = col.to_vec();
            sort_values(&mut values);
            Sorted { values, weights: None }
        }
        Some(w) => {
            let (values, weights) = sort_weighted(col, w);
            Sorted { values, weights: Some(weights) }
        }
    }
}

fn pair_cost(a: &Sorted, b: &Sorted) -> f64 {
    match (&a.weights, &b.weights) {
        (None, None) => w2_sorted(&a.values, &b.values),
        _ => {
            let uniform = |s: &Sorted| vec![1.0 / s.values.len() as f64; s.values.len()];
            let wa = a.weights.clone().unwrap_or_else(|| uniform(a));
            let wb = b.weights.clone().unwrap_or_else(|| uniform(b));
            w2_sorted_weighted(&a.values, &wa, &b.values, &wb)
        }
    }
}

fn check_pair(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    a.ensure_same_dim(b)?;
    if !a.is_weighted() && !b.is_weighted() && a.n() != b.n() {
        return Err(Error::SizeMismatch { left: a.n(), right: b.n() });
    }
    Ok(())
}

/// Per-direction 1D costs between `reference` and each of `others`.
///
/// `result[k][i]` is the squared 1D distance along direction `i` between
/// the reference and `others[k]`.
pub(crate) fn sliced_costs(
    reference: &EmbeddingSet,
    others: &[&EmbeddingSet],
    dirs: Directions<'_>,
) -> Result<Vec<Vec<f64>>> {
    for o in others {
        check_pair(reference, o)?;
    }
    if let Directions::Given(p) = dirs {
        if p.d() != reference.d() {
            return Err(Error::DimensionMismatch { expected: reference.d(), found: p.d() });
        }
    }
    let mut sets = Vec::with_capacity(others.len() + 1);
    sets.push(reference);
    sets.extend_from_slice(others);

    let blocks = map_blocks(&sets, dirs, |proj: &[Mat<f64>]| {
        let k = proj[0].ncols();
        let mut out = vec![Vec::with_capacity(k); others.len()];
        for c in 0..k {
            let r = sort_column(proj[0].col_as_slice(c), reference);
            for (o, (set, p)) in others.iter().zip(&proj[1..]).enumerate() {
                let s = sort_column(p.col_as_slice(c), set);
                out[o].push(pair_cost(&r, &s));
            }
        }
        out
    });

    let mut costs = vec![Vec::with_capacity(dirs.count()); others.len()];
    for block in blocks {
        for (dst, src) in costs.iter_mut().zip(block) {
            dst.extend(src);
        }
    }
    Ok(costs)
}

/// Average over the given directions of the squared 1D Wasserstein distance.
pub fn sliced_w2_estimate(a: &EmbeddingSet, b: &EmbeddingSet, proj: &ProjectionSet) -> Result<SlicedEstimate> {
    let costs = sliced_costs(a, &[b], Directions::Given(proj))?;
    Ok(SlicedEstimate::from_costs(&costs[0]))
}

pub fn sliced_w2(a: &EmbeddingSet, b: &EmbeddingSet, proj: &ProjectionSet) -> Result<f64> {
    sliced_w2_estimate(a, b, proj).map(|e| e.value)
}

/// MIND of `reference` against each set in `others`, sharing the
/// projections of the reference.
pub fn mind_against(reference: &EmbeddingSet, others: &[&EmbeddingSet], cfg: &MindConfig) -> Result<Vec<MindResult>> {
    cfg.validate()?;
    let alpha = cfg.alpha_for(reference.d());
    let costs = sliced_costs(reference, others, Directions::Seeded { seed: cfg.seed, m: cfg.projections })?;
    Ok(costs
        .iter()
        .map(|c| {
            let sliced = SlicedEstimate::from_costs(c);
            MindResult { value: alpha * sliced.value, alpha, sliced, seed: cfg.seed }
        })
        .collect())
}

/// `alpha / M * sum_i W2^2(u_i^T a, u_i^T b)` over `M` seeded directions.
pub fn mind(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &MindConfig) -> Result<MindResult> {
    Ok(mind_against(a, &[b], cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::one_dim::w2_1d;
    use crate::ot::projection::sample_directions;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = set(&[&[1.0, 2.0], &[3.0, -1.0], &[0.5, 0.5]]);
        let r = mind(&a, &a, &MindConfig { projections: 17, ..Default::default() }).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn one_dimensional_reduces_to_w2() {
        let x = [0.3, -1.0, 2.0, 5.5];
        let y = [1.0, 1.5, -0.25, 0.0];
        let a = EmbeddingSet::new(x.to_vec(), 4, 1).unwrap();
        let b = EmbeddingSet::new(y.to_vec(), 4, 1).unwrap();
        let expect = w2_1d(&x, &y).unwrap();
        for m in [1, 3, 40] {
            let p = sample_directions(m, 1, 7).unwrap();
            let v = sliced_w2(&a, &b, &p).unwrap();
            assert!((v - expect).abs() <= 1e-14 * expect, "{v} vs {expect}");
        }
    }

    #[test]
    fn auto_alpha_is_three_d() {
        let cfg = MindConfig::default();
        assert_eq!(cfg.alpha_for(2048), 6144.0);
        assert_eq!(MindConfig { alpha: Alpha::Explicit(2.5), ..cfg }.alpha_for(2048), 2.5);
        assert!(MindConfig { alpha: Alpha::Explicit(0.0), ..cfg }.validate().is_err());
        assert!(MindConfig { projections: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn errors() {
        let a = set(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let b = set(&[&[1.0, 2.0]]);
        assert!(matches!(mind(&a, &b, &MindConfig::default()), Err(Error::SizeMismatch { .. })));
        let c = set(&[&[1.0], &[2.0]]);
        assert!(matches!(mind(&a, &c, &MindConfig::default()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn weighted_path_allows_unequal_sizes() {
        let a = set(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let b = set(&[&[1.0, 0.0]]).with_weights(vec![1.0]).unwrap();
        let p = sample_directions(64, 2, 1).unwrap();
        let est = sliced_w2_estimate(&a, &b, &p).unwrap();
        // along u, the two atoms sit at distance |u_0| from the center
        let expect: f64 = (0..64).map(|i| p.direction(i)[0].powi(2)).sum::<f64>() / 64.0;
        assert!((est.value - expect).abs() < 1e-12);
    }

    #[test]
    fn against_matches_pairwise() {
        let a = set(&[&[0.0, 1.0], &[2.0, 3.0], &[-1.0, 0.5]]);
        let b = set(&[&[1.0, 1.0], &[0.0, 3.0], &[4.0, 0.5]]);
        let c = set(&[&[5.0, 1.0], &[2.0, 2.0], &[-1.0, -0.5]]);
        let cfg = MindConfig { projections: 70, seed: 4, ..Default::default() };
        let both = mind_against(&a, &[&b, &c], &cfg).unwrap();
        assert_eq!(both[0], mind(&a, &b, &cfg).unwrap());
        assert_eq!(both[1], mind(&a, &c, &cfg).unwrap());
    }

    #[test]
    fn symmetric_exactly() {
        let a = set(&[&[0.0, 1.0], &[2.0, 3.0], &[-1.0, 0.5]]);
        let b = set(&[&[1.0, 1.0], &[0.0, 3.0], &[4.0, 0.5]]);
        let cfg = MindConfig { projections: 33, ..Default::default() };
        assert_eq!(mind(&a, &b, &cfg).unwrap().value, mind(&b, &a, &cfg).unwrap().value);
    }
}
