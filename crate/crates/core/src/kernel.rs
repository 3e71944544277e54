//! Gaussian-kernel maximum mean discrepancy.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// Pooled points above this count are thinned before the median heuristic.
pub const MEDIAN_POOL_MAX: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Median,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Biased V-statistic, diagonal self-terms included.
    V,
    /// Unbiased U-statistic, diagonal self-terms excluded.
    U,
}

/// How the pairwise kernel matrix is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    Tiled { tile: usize },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub sigma: Bandwidth,
    pub estimator: Estimator,
    pub mode: KernelMode,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self { sigma: Bandwidth::Median, estimator: Estimator::U, mode: KernelMode::Tiled { tile: 512 } }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Explicit(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma must be positive, got {s}")));
            }
        }
        if let KernelMode::Tiled { tile: 0 } = self.mode {
            return Err(Error::InvalidParameter("tile size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub value: f64,
    pub sigma: f64,
    pub estimator: Estimator,
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Median of squared pairwise distances over the pooled rows of both sets.
///
/// Pools larger than [`MEDIAN_POOL_MAX`] are thinned to evenly strided rows.
pub fn median_heuristic(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
    a.ensure_same_dim(b)?;
    let total = a.n() + b.n();
    if total < 2 {
        return Err(Error::TooFewSamples { n: total });
    }
    let row = |k: usize| if k < a.n() { a.row(k) } else { b.row(k - a.n()) };
    let keep = total.min(MEDIAN_POOL_MAX);
    let pool: Vec<&[f64]> = (0..keep).map(|i| row(i * total / keep)).collect();
    let mut dists: Vec<f64> = (0..pool.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let pool = &pool;
            (i + 1..pool.len()).map(move |j| sq_dist(pool[i], pool[j]))
        })
        .collect();
    let mid = dists.len() / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    Ok(median)
}

/// `sum_{i,j} w_i v_j exp(-||x_i - y_j||^2 / sigma)`, optionally skipping
/// `i == j` (only meaningful when `x` and `y` are the same set).
fn kernel_sum(x: &EmbeddingSet, y: &EmbeddingSet, sigma: f64, skip_diag: bool, mode: KernelMode) -> f64 {
    let wx = x.weights_or_uniform();
    let wy = y.weights_or_uniform();
    let entry = |i: usize, j: usize| -> f64 {
        if skip_diag && i == j {
            0.0
        } else {
            (-sq_dist(x.row(i), y.row(j)) / sigma).exp()
        }
    };
    match mode {
        KernelMode::Full => {
            let (n, m) = (x.n(), y.n());
            let mut k = vec![0.0; n * m];
            k.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = entry(i, j);
                }
            });
            k.chunks(m).zip(&wx).map(|(row, wi)| wi * row.iter().zip(&wy).map(|(v, w)| v * w).sum::<f64>()).sum()
        }
        KernelMode::Tiled { tile } => {
            let row_tiles = x.n().div_ceil(tile);
            let col_tiles = y.n().div_ceil(tile);
            let partial: Vec<f64> = (0..row_tiles)
                .into_par_iter()
                .map(|ti| {
                    let rows = ti * tile..((ti + 1) * tile).min(x.n());
                    let mut buf = vec![0.0; tile * tile];
                    let mut acc = 0.0;
                    for tj in 0..col_tiles {
                        let cols = tj * tile..((tj + 1) * tile).min(y.n());
                        let width = cols.len();
                        for (r, i) in rows.clone().enumerate() {
                            for (c, j) in cols.clone().enumerate() {
                                buf[r * width + c] = entry(i, j);
                            }
                        }
                        for (r, i) in rows.clone().enumerate() {
                            let s: f64 = buf[r * width..(r + 1) * width]
                                .iter()
                                .zip(&wy[cols.clone()])
                                .map(|(v, w)| v * w)
                                .sum();
                            acc += wx[i] * s;
                        }
                    }
                    acc
                })
                .collect();
            partial.iter().sum()
        }
    }
}

/// Orders a pair so that the estimate does not depend on argument order.
fn canonical<'a>(a: &'a EmbeddingSet, b: &'a EmbeddingSet) -> (&'a EmbeddingSet, &'a EmbeddingSet) {
    let key = a
        .n()
        .cmp(&b.n())
        .then_with(|| {
            a.data().iter().zip(b.data()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
        .then_with(|| match (a.weights(), b.weights()) {
            (Some(wa), Some(wb)) => {
                wa.iter().zip(wb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
            }
            (wa, wb) => wa.is_some().cmp(&wb.is_some()),
        });
    if key == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

fn within(set: &EmbeddingSet, sigma: f64, estimator: Estimator, mode: KernelMode) -> Result<f64> {
    match estimator {
        Estimator::V => Ok(kernel_sum(set, set, sigma, false, mode)),
        Estimator::U => {
            let w = set.weights_or_uniform();
            let norm = 1.0 - w.iter().map(|v| v * v).sum::<f64>();
            if set.n() < 2 || norm <= 0.0 {
                return Err(Error::TooFewSamples { n: set.n() });
            }
            Ok(kernel_sum(set, set, sigma, true, mode) / norm)
        }
    }
}

/// `E k(x,x') - 2 E k(x,y) + E k(y,y')` with `k(x,y) = exp(-||x-y||^2 / sigma)`.
pub fn mmd(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &MmdConfig) -> Result<MmdResult> {
    cfg.validate()?;
    a.ensure_same_dim(b)?;
    let (a, b) = canonical(a, b);
    let sigma = match cfg.sigma {
        Bandwidth::Median => median_heuristic(a, b)?,
        Bandwidth::Explicit(s) => s,
    };
    let kaa = within(a, sigma, cfg.estimator, cfg.mode)?;
    let kbb = within(b, sigma, cfg.estimator, cfg.mode)?;
    let kab = kernel_sum(a, b, sigma, false, cfg.mode);
    Ok(MmdResult { value: kaa + kbb - 2.0 * kab, sigma, estimator: cfg.estimator })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> EmbeddingSet {
        EmbeddingSet::new(v.to_vec(), v.len(), 1).unwrap()
    }

    fn v_cfg(sigma: f64) -> MmdConfig {
        MmdConfig { sigma: Bandwidth::Explicit(sigma), estimator: Estimator::V, ..Default::default() }
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_heuristic(&col(&[0.0]), &col(&[2.0])).unwrap(), 4.0);
        assert_eq!(median_heuristic(&col(&[0.0, 1.0]), &col(&[3.0])).unwrap(), 4.0);
        assert_eq!(median_heuristic(&col(&[0.0, 1.0]), &col(&[3.0, 7.0])).unwrap(), 0.5 * (9.0 + 16.0));
    }

    #[test]
    fn median_scales_quadratically() {
        let a = col(&[0.0, 1.3, 2.2]);
        let b = col(&[3.1, -0.4]);
        let base = median_heuristic(&a, &b).unwrap();
        let scaled = median_heuristic(&a.map(|_, _, v| 4.0 * v).unwrap(), &b.map(|_, _, v| 4.0 * v).unwrap()).unwrap();
        assert_eq!(scaled, 16.0 * base);
    }

    #[test]
    fn degenerate_bandwidth() {
        let a = col(&[1.0, 1.0]);
        assert!(matches!(median_heuristic(&a, &a), Err(Error::DegenerateBandwidth)));
        assert!(matches!(mmd(&a, &a, &MmdConfig::default()), Err(Error::DegenerateBandwidth)));
    }

    #[test]
    fn v_self_distance_is_zero() {
        let a = EmbeddingSet::from_rows(&[[0.0, 1.0], [2.0, 3.0], [1.0, -1.0]]).unwrap();
        for mode in [KernelMode::Full, KernelMode::Tiled { tile: 2 }] {
            let cfg = MmdConfig { mode, ..v_cfg(1.5) };
            assert_eq!(mmd(&a, &a, &cfg).unwrap().value, 0.0);
        }
    }

    #[test]
    fn singleton_closed_form() {
        let a = EmbeddingSet::from_rows(&[[0.0, 1.0]]).unwrap();
        let b = EmbeddingSet::from_rows(&[[2.0, 0.0]]).unwrap();
        let v = mmd(&a, &b, &v_cfg(2.0)).unwrap().value;
        assert!((v - (2.0 - 2.0 * (-5.0f64 / 2.0).exp())).abs() < 1e-15);
    }

    #[test]
    fn exact_argument_symmetry() {
        let a = EmbeddingSet::from_rows(&[[0.0, 1.0], [2.0, 3.0], [1.0, -1.0]]).unwrap();
        let b = EmbeddingSet::from_rows(&[[1.0, 1.0], [0.3, 3.0]]).unwrap();
        let cfg = MmdConfig::default();
        assert_eq!(mmd(&a, &b, &cfg).unwrap().value, mmd(&b, &a, &cfg).unwrap().value);
    }

    #[test]
    fn tiled_matches_full() {
        let a = EmbeddingSet::new((0..30).map(|v| ((v * 7) % 11) as f64 * 0.3).collect(), 15, 2).unwrap();
        let b = EmbeddingSet::new((0..26).map(|v| ((v * 5) % 13) as f64 * 0.25).collect(), 13, 2).unwrap();
        let full = mmd(&a, &b, &MmdConfig { mode: KernelMode::Full, ..Default::default() }).unwrap().value;
        let tiled = mmd(&a, &b, &MmdConfig { mode: KernelMode::Tiled { tile: 4 }, ..Default::default() }).unwrap().value;
        assert!((full - tiled).abs() < 1e-14);
    }

    #[test]
    fn u_needs_two_rows() {
        let a = col(&[0.0]);
        let b = col(&[1.0, 2.0]);
        assert!(matches!(mmd(&a, &b, &MmdConfig::default()), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn monotone_in_separation() {
        let a = col(&[0.0]);
        let mut last = 0.0;
        for k in 1..10 {
            let v = mmd(&a, &col(&[k as f64 * 0.3]), &v_cfg(1.0)).unwrap().value;
            assert!(v > last);
            last = v;
        }
    }
}
