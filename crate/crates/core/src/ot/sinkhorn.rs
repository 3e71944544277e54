//! Entropic optimal transport solved by log-domain Sinkhorn iterations, and
//! the debiased Sinkhorn divergence.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, role};

/// Regularization strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Epsilon {
    /// `0.05 * mean(C)`.
    Auto,
    /// A multiple of the mean pairwise cost.
    Relative(f64),
    /// Absolute cost units.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    pub max_iter: usize,
    /// Bound on the L1 violation of the row marginal.
    pub tol: f64,
    pub split_correction: bool,
    /// Seeds the shuffle that halves each set under split correction.
    pub seed: u64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: Epsilon::Auto, max_iter: 5000, tol: 1e-6, split_correction: true, seed: 0 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        match self.epsilon {
            Epsilon::Relative(e) | Epsilon::Absolute(e) if !(e > 0.0 && e.is_finite()) => {
                return bad("epsilon must be positive");
            }
            _ => {}
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1");
        }
        Ok(())
    }

    fn resolve(&self, mean_cost: f64) -> f64 {
        let eps = match self.epsilon {
            Epsilon::Auto => 0.05 * mean_cost,
            Epsilon::Relative(r) => r * mean_cost,
            Epsilon::Absolute(e) => e,
        };
        // zero mean cost
        if eps > 0.0 {
            eps
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornResult {
    /// `<pi, C>` under the final plan, entropy excluded.
    pub cost: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_error: f64,
}

/// Atoms with positive mass and their log-weights.
struct Measure<'a> {
    rows: Vec<&'a [f64]>,
    log_w: Vec<f64>,
}

impl<'a> Measure<'a> {
    fn new(set: &'a EmbeddingSet) -> Self {
        let mut rows = Vec::with_capacity(set.n());
        let mut log_w = Vec::with_capacity(set.n());
        for i in 0..set.n() {
            let w = set.weight(i);
            if w > 0.0 {
                rows.push(set.row(i));
                log_w.push(w.ln());
            }
        }
        Self { rows, log_w }
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `E_{a x b} ||x - y||^2 = ||mu_a - mu_b||^2 + tr(S_a) + tr(S_b)`.
pub(crate) fn mean_sq_cost(a: &EmbeddingSet, b: &EmbeddingSet) -> f64 {
    let d = a.d();
    let moments = |s: &EmbeddingSet| {
        let mut mean = vec![0.0; d];
        let mut second = 0.0;
        for i in 0..s.n() {
            let w = s.weight(i);
            for (m, x) in mean.iter_mut().zip(s.row(i)) {
                *m += w * x;
            }
            second += w * s.row(i).iter().map(|x| x * x).sum::<f64>();
        }
        let var = second - mean.iter().map(|m| m * m).sum::<f64>();
        (mean, var.max(0.0))
    };
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    sq_dist(&ma, &mb) + va + vb
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

struct Solver<'a> {
    a: Measure<'a>,
    b: Measure<'a>,
    /// Row-major `n x m` cost matrix.
    cost: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(a: &'a EmbeddingSet, b: &'a EmbeddingSet) -> Self {
        let (a, b) = (Measure::new(a), Measure::new(b));
        let m = b.rows.len();
        let mut cost = vec![0.0; a.rows.len() * m];
        for (i, x) in a.rows.iter().enumerate() {
            for (j, y) in b.rows.iter().enumerate() {
                cost[i * m + j] = sq_dist(x, y);
            }
        }
        let (n, m) = (a.rows.len(), b.rows.len());
        Self { a, b, cost, f: vec![0.0; n], g: vec![0.0; m] }
    }

    fn update_f(&mut self, eps: f64) {
        let m = self.g.len();
        for i in 0..self.f.len() {
            let row = &self.cost[i * m..(i + 1) * m];
            let terms = row.iter().zip(&self.g).zip(&self.b.log_w).map(|((c, g), lw)| lw + (g - c) / eps);
            self.f[i] = -eps * log_sum_exp(terms);
        }
    }

    fn update_g(&mut self, eps: f64) {
        let m = self.g.len();
        for j in 0..m {
            let terms = (0..self.f.len()).map(|i| self.a.log_w[i] + (self.f[i] - self.cost[i * m + j]) / eps);
            self.g[j] = -eps * log_sum_exp(terms);
        }
    }

    /// L1 distance between the plan's row sums and the row weights.
    fn row_error(&self, eps: f64) -> f64 {
        let m = self.g.len();
        (0..self.f.len())
            .map(|i| {
                let row = &self.cost[i * m..(i + 1) * m];
                let log_r = self.a.log_w[i]
                    + log_sum_exp(
                        row.iter()
                            .zip(&self.g)
                            .zip(&self.b.log_w)
                            .map(|((c, g), lw)| lw + (self.f[i] + g - c) / eps),
                    );
                (log_r.exp() - self.a.log_w[i].exp()).abs()
            })
            .sum()
    }

    fn transport_cost(&self, eps: f64) -> f64 {
        let m = self.g.len();
        let mut total = 0.0;
        for i in 0..self.f.len() {
            for j in 0..m {
                let c = self.cost[i * m + j];
                let log_pi = self.a.log_w[i] + self.b.log_w[j] + (self.f[i] + self.g[j] - c) / eps;
                total += log_pi.exp() * c;
            }
        }
        total
    }

    fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// Runs epsilon-scaling from the cost range down to `eps`, warm-starting
    /// each stage from the previous potentials.
    fn solve(&mut self, eps: f64, max_iter: usize, tol: f64) -> SinkhornResult {
        const CHECK_EVERY: usize = 5;
        let mut stages = Vec::new();
        let mut e = self.max_cost().max(eps);
        while e > eps {
            stages.push(e);
            e *= 0.5;
        }
        stages.push(eps);

        let mut iterations = 0;
        let mut err = f64::INFINITY;
        let last = stages.len() - 1;
        for (k, &e) in stages.iter().enumerate() {
            let stage_tol = if k == last { tol } else { tol.max(1e-3) };
            let mut local = 0;
            loop {
                self.update_f(e);
                self.update_g(e);
                iterations += 1;
                local += 1;
                let check = local % CHECK_EVERY == 0 || iterations >= max_iter;
                if check {
                    err = self.row_error(e);
                    if err <= stage_tol {
                        break;
                    }
                }
                if iterations >= max_iter {
                    break;
                }
            }
            if iterations >= max_iter && k != last {
                // out of budget, finish on the target epsilon
                self.update_f(eps);
                self.update_g(eps);
                err = self.row_error(eps);
                break;
            }
        }
        let converged = err <= tol;
        SinkhornResult { cost: self.transport_cost(eps), epsilon: eps, iterations, converged, marginal_error: err }
    }
}

fn check_inputs(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &SinkhornConfig) -> Result<()> {
    cfg.validate()?;
    a.ensure_same_dim(b)
}

/// Entropic transport cost with `epsilon` already resolved to cost units.
pub fn sinkhorn_cost_abs(a: &EmbeddingSet, b: &EmbeddingSet, eps: f64, max_iter: usize, tol: f64) -> SinkhornResult {
    let mut solver = Solver::new(a, b);
    let res = solver.solve(eps, max_iter, tol);
    if !res.converged {
        log::warn!(
            "sinkhorn did not converge: marginal error {:.3e} after {} iterations (eps={:.3e})",
            res.marginal_error,
            res.iterations,
            eps
        );
    }
    res
}

/// Transport cost `<pi, C>` of the entropic plan between two sets, with
/// `C_jk = ||x_j - y_k||^2`. Non-convergence is flagged, not an error.
pub fn sinkhorn_cost(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    check_inputs(a, b, cfg)?;
    let eps = cfg.resolve(mean_sq_cost(a, b));
    Ok(sinkhorn_cost_abs(a, b, eps, cfg.max_iter, cfg.tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornDivergence {
    pub value: f64,
    pub epsilon: f64,
    pub cross: SinkhornResult,
    pub self_a: SinkhornResult,
    pub self_b: SinkhornResult,
    pub converged: bool,
}

/// Splits a set into two halves after a seeded shuffle. Weighted halves are
/// renormalized to unit mass.
pub(crate) fn split_halves(set: &EmbeddingSet, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let n = set.n();
    if n % 2 != 0 {
        return Err(Error::OddSplit { n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    let half = |ix: &[usize]| -> Result<EmbeddingSet> {
        let out = set.select_rows(ix)?;
        match set.weights() {
            None => Ok(out),
            Some(w) => {
                let mass: f64 = ix.iter().map(|&i| w[i]).sum();
                if mass <= 0.0 {
                    return Err(Error::InvalidParameter("split half carries no mass".into()));
                }
                out.with_weights(ix.iter().map(|&i| w[i] / mass).collect())
            }
        }
    };
    Ok((half(&idx[..n / 2])?, half(&idx[n / 2..])?))
}

/// `W(A1, B1) - W(A1, A2)/2 - W(B1, B2)/2` with independent halves, or the
/// same-sample form `W(A, B) - W(A, A)/2 - W(B, B)/2` without split.
///
/// All three terms share one `epsilon`, resolved from the cross pair.
pub fn sinkhorn_divergence(a: &EmbeddingSet, b: &EmbeddingSet, cfg: &SinkhornConfig) -> Result<SinkhornDivergence> {
    check_inputs(a, b, cfg)?;
    let run = |x: &EmbeddingSet, y: &EmbeddingSet, eps: f64| sinkhorn_cost_abs(x, y, eps, cfg.max_iter, cfg.tol);
    let (cross, self_a, self_b, eps) = if cfg.split_correction {
        let (a1, a2) = split_halves(a, derive_seed(cfg.seed, &[role::SPLIT, 0]))?;
        let (b1, b2) = split_halves(b, derive_seed(cfg.seed, &[role::SPLIT, 1]))?;
        let eps = cfg.resolve(mean_sq_cost(&a1, &b1));
        (run(&a1, &b1, eps), run(&a1, &a2, eps), run(&b1, &b2, eps), eps)
    } else {
        let eps = cfg.resolve(mean_sq_cost(a, b));
        (run(a, b, eps), run(a, a, eps), run(b, b, eps), eps)
    };
    let value = cross.cost - 0.5 * self_a.cost - 0.5 * self_b.cost;
    let converged = cross.converged && self_a.converged && self_b.converged;
    Ok(SinkhornDivergence { value, epsilon: eps, cross, self_a, self_b, converged })
}
