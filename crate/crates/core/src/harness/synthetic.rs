//! Synthetic embedding pools for experiments that need no external data.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream_rng};

/// Rows generated per independent random stream.
const ROW_CHUNK: usize = 1024;

fn standard_normal(n: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut z = vec![0.0; n * k];
    for (c, chunk) in z.chunks_mut(ROW_CHUNK * k).enumerate() {
        let mut rng = stream_rng(seed, c as u64);
        chunk.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    z
}

/// Samples `n` rows of `mean + L z` with `z ~ N(0, I_k)`, where `factor` is
/// the `d x k` matrix `L` (identity when `None`), so the covariance is `L L^T`.
pub fn gaussian_pool(n: usize, mean: &[f64], factor: Option<MatRef<'_, f64>>, seed: u64) -> Result<EmbeddingSet> {
    let d = mean.len();
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("pool size and dimension must be >= 1".into()));
    }
    let data = match factor {
        None => {
            let mut z = standard_normal(n, d, seed);
            for row in z.chunks_mut(d) {
                row.iter_mut().zip(mean).for_each(|(v, m)| *v += m);
            }
            z
        }
        Some(l) => {
            if l.nrows() != d {
                return Err(Error::DimensionMismatch { expected: d, found: l.nrows() });
            }
            let k = l.ncols();
            let z = standard_normal(n, k, seed);
            let mut x = Mat::<f64>::from_fn(n, d, |_, j| mean[j]);
            matmul(x.as_mut(), Accum::Add, MatRef::from_row_major_slice(&z, n, k), l.transpose(), 1.0, Par::Seq);
            let mut data = Vec::with_capacity(n * d);
            for i in 0..n {
                data.extend((0..d).map(|j| x[(i, j)]));
            }
            data
        }
    };
    EmbeddingSet::new(data, n, d)
}

/// `d x d` factor `A / sqrt(d)` with standard normal entries, giving a
/// random full-rank covariance `A A^T / d` of trace about `d`.
pub fn random_factor(d: usize, seed: u64) -> Mat<f64> {
    let mut rng = rng_from(seed);
    let scale = 1.0 / (d as f64).sqrt();
    Mat::from_fn(d, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Random direction of Euclidean norm `length`.
pub fn random_shift(d: usize, length: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| length * x / norm).collect()
}

/// Component of a Gaussian mixture: weight, mean and isotropic scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub scale: f64,
}

/// Samples `n` rows from an isotropic Gaussian mixture. Component counts
/// are fixed by largest-remainder rounding and rows are shuffled.
pub fn mixture_pool(n: usize, components: &[Component], seed: u64) -> Result<EmbeddingSet> {
    let first = components.first().ok_or_else(|| Error::InvalidParameter("mixture needs a component".into()))?;
    let d = first.mean.len();
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| c.mean.len() != d || !(c.weight >= 0.0) || !(c.scale >= 0.0)) || !(total > 0.0) {
        return Err(Error::InvalidParameter("invalid mixture component".into()));
    }
    let exact: Vec<f64> = components.iter().map(|c| c.weight / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    let mut data = Vec::with_capacity(n * d);
    for (k, (c, &count)) in components.iter().zip(&counts).enumerate() {
        if count == 0 {
            continue;
        }
        let z = standard_normal(count, d, derive_seed(seed, &[k as u64]));
        for row in z.chunks(d) {
            data.extend(row.iter().zip(&c.mean).map(|(z, m)| m + c.scale * z));
        }
    }
    let set = EmbeddingSet::new(data, n, d)?;
    crate::embedding::subsample(&set, n, derive_seed(seed, &[u64::MAX]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::summarize;

    #[test]
    fn gaussian_pool_moments() {
        let l = Mat::from_fn(2, 2, |i, j| [[1.0, 0.0], [0.5, 2.0]][i][j]);
        let s = gaussian_pool(200_000, &[1.0, -2.0], Some(l.as_ref()), 3).unwrap();
        let g = summarize(&s).unwrap();
        assert!((g.mean[0] - 1.0).abs() < 0.01 && (g.mean[1] + 2.0).abs() < 0.02);
        let expect = [[1.0, 0.5], [0.5, 4.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.cov[(i, j)] - expect[i][j]).abs() < 0.03, "{i}{j}: {}", g.cov[(i, j)]);
            }
        }
    }

    #[test]
    fn pools_are_deterministic() {
        assert_eq!(gaussian_pool(50, &[0.0; 3], None, 1).unwrap(), gaussian_pool(50, &[0.0; 3], None, 1).unwrap());
        assert_ne!(gaussian_pool(50, &[0.0; 3], None, 1).unwrap(), gaussian_pool(50, &[0.0; 3], None, 2).unwrap());
    }

    #[test]
    fn mixture_counts() {
        let comps = [
            Component { weight: 1.0, mean: vec![-100.0], scale: 1.0 },
            Component { weight: 3.0, mean: vec![100.0], scale: 1.0 },
        ];
        let s = mixture_pool(101, &comps, 5).unwrap();
        let left = s.data().iter().filter(|&&v| v < 0.0).count();
        assert_eq!(left, 25);
    }

    #[test]
    fn shift_has_requested_length() {
        let v = random_shift(17, 2.5, 4);
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 2.5).abs() < 1e-12);
    }
}
