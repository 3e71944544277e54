//! Exact squared 2-Wasserstein distance between 1D discrete measures.

use crate::embedding::WEIGHT_SUM_TOL;
use crate::error::{Error, Result};

#[inline]
pub(crate) fn sort_values(v: &mut [f64]) {
    v.sort_unstable_by(f64::total_cmp);
}

/// Sorts values and carries their weights along.
pub(crate) fn sort_weighted(values: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&i, &j| values[i].total_cmp(&values[j]));
    (idx.iter().map(|&i| values[i]).collect(), idx.iter().map(|&i| weights[i]).collect())
}

/// Mean squared difference of two sorted, equal-length vectors.
///
/// Terms are added in mirrored pairs `(j, n-1-j)`, so reversing both inputs
/// (projecting on `-u` instead of `u`) gives a bit-identical result.
#[inline]
pub(crate) fn w2_sorted(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let term = |j: usize| (xs[j] - ys[j]) * (xs[j] - ys[j]);
    let mut sum = 0.0;
    for j in 0..n / 2 {
        sum += term(j) + term(n - 1 - j);
    }
    if n % 2 == 1 {
        sum += term(n / 2);
    }
    sum / n as f64
}

/// Transport cost between two sorted weighted measures, by walking the
/// merged breakpoints of their cumulative distribution functions.
pub(crate) fn w2_sorted_weighted(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wx[0], wy[0]);
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        let diff = xs[i] - ys[j];
        cost += mass * diff * diff;
        ra -= mass;
        rb -= mass;
        if ra <= 0.0 {
            i += 1;
            if i == xs.len() {
                break;
            }
            ra = wx[i];
        }
        if rb <= 0.0 {
            j += 1;
            if j == ys.len() {
                break;
            }
            rb = wy[j];
        }
    }
    cost
}

/// `(1/n) * sum_j (sort(x)_j - sort(y)_j)^2`.
pub fn w2_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    if x.is_empty() {
        return Err(Error::InvalidParameter("empty input".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntermediate("w2_1d input"));
    }
    let (mut xs, mut ys) = (x.to_vec(), y.to_vec());
    sort_values(&mut xs);
    sort_values(&mut ys);
    Ok(w2_sorted(&xs, &ys))
}

fn check_measure(v: &[f64], w: &[f64]) -> Result<()> {
    if v.len() != w.len() {
        return Err(Error::SizeMismatch { left: v.len(), right: w.len() });
    }
    if v.is_empty() {
        return Err(Error::InvalidParameter("empty input".into()));
    }
    if v.iter().chain(w).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteIntermediate("w2_1d_weighted input"));
    }
    if let Some((row, &value)) = w.iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeWeight { row, value });
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSum { sum });
    }
    Ok(())
}

/// Exact squared 2-Wasserstein distance between two weighted 1D measures.
pub fn w2_1d_weighted(x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> Result<f64> {
    check_measure(x, wx)?;
    check_measure(y, wy)?;
    let (xs, wxs) = sort_weighted(x, wx);
    let (ys, wys) = sort_weighted(y, wy);
    Ok(w2_sorted_weighted(&xs, &wxs, &ys, &wys))
}
