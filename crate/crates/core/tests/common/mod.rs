//! Reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use mind_core::rng::rng_from;
use mind_core::EmbeddingSet;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Heap's algorithm over all orderings of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(p.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, p, out);
            if k % 2 == 0 {
                p.swap(i, k - 1);
            } else {
                p.swap(0, k - 1);
            }
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}

/// Minimum mean pairing cost between two equal-size point clouds.
pub fn brute_force_ot(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    permutations(n)
        .iter()
        .map(|p| {
            (0..n)
                .map(|i| x[i].iter().zip(&y[p[i]]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn brute_force_w2_1d(x: &[f64], y: &[f64]) -> f64 {
    let xs: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let ys: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
    brute_force_ot(&xs, &ys)
}

/// Plain double loop over `exp(-||x-y||^2 / sigma)`.
pub fn naive_mmd(a: &EmbeddingSet, b: &EmbeddingSet, sigma: f64, unbiased: bool) -> f64 {
    let k = |x: &[f64], y: &[f64]| (-x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / sigma).exp();
    let within = |s: &EmbeddingSet| {
        let n = s.n();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if unbiased && i == j {
                    continue;
                }
                total += k(s.row(i), s.row(j));
            }
        }
        if unbiased {
            total / (n * (n - 1)) as f64
        } else {
            total / (n * n) as f64
        }
    };
    let mut cross = 0.0;
    for x in a.rows() {
        for y in b.rows() {
            cross += k(x, y);
        }
    }
    within(a) + within(b) - 2.0 * cross / (a.n() * b.n()) as f64
}

pub fn to_dmatrix(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `sum_i sqrt(lambda_i(Sx Sy))` from a general (non-symmetric) eigensolve.
pub fn trace_sqrt_product_oracle(sx: &DMatrix<f64>, sy: &DMatrix<f64>) -> f64 {
    let prod = sx * sy;
    prod.complex_eigenvalues().iter().map(|l| l.re.max(0.0).sqrt()).sum()
}

/// Random PSD matrix `A A^T` with `A` of shape `d x k`.
pub fn random_psd(d: usize, k: usize, seed: u64) -> faer::Mat<f64> {
    let mut rng = rng_from(seed);
    let a = DMatrix::<f64>::from_fn(d, k, |_, _| rng.sample(StandardNormal));
    let s = &a * a.transpose();
    faer::Mat::from_fn(d, d, |i, j| s[(i, j)])
}

pub fn normal_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

pub fn set_from(rows: &[Vec<f64>]) -> EmbeddingSet {
    EmbeddingSet::from_rows(rows).unwrap()
}

/// Weighted set expanded into an unweighted one with each atom repeated in
/// proportion to its weight; weights must be multiples of `1/k`.
pub fn replicate(values: &[f64], weights: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k);
    for (v, w) in values.iter().zip(weights) {
        let copies = (w * k as f64).round() as usize;
        out.extend(std::iter::repeat_n(*v, copies));
    }
    out
}
