//! Hypothesis-testing protocols measuring how often a metric orders
//! empirical distributions incorrectly.
//!
//! Every trial draws its subsamples from seeds derived from the master seed
//! and the trial index, and trials are reduced in index order, so results do
//! not depend on scheduling or thread count.

pub mod perturbation;
pub mod synthetic;

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{sample_indices, EmbeddingSet};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng::{derive_seed, role};

pub use perturbation::{GaussianNoise, Mixture, Perturbation};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl TrialPlan {
    pub const DEFAULT_TRIALS: usize = 512;

    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, trials: Self::DEFAULT_TRIALS, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::InvalidParameter("trial plan needs n >= 1 and trials >= 1".into()));
        }
        Ok(())
    }

    fn trial_seed(&self, t: usize) -> u64 {
        derive_seed(self.seed, &[role::TRIAL, t as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbability {
    pub estimate: f64,
    pub failures: usize,
    pub trials: usize,
    pub wilson_ci: (f64, f64),
}

impl ErrorProbability {
    pub fn from_counts(failures: usize, trials: usize) -> Self {
        Self { estimate: failures as f64 / trials as f64, failures, trials, wilson_ci: wilson_interval(failures, trials) }
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(count: usize, trials: usize) -> (f64, f64) {
    let n = trials as f64;
    let p = count as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

fn take(pool: &EmbeddingSet, idx: &[usize]) -> Result<EmbeddingSet> {
    pool.select_rows(idx)
}

fn check_pool(pool: &EmbeddingSet, needed: usize) -> Result<()> {
    if pool.n() < needed {
        return Err(Error::InsufficientRows { requested: needed, available: pool.n() });
    }
    if pool.is_weighted() {
        return Err(Error::WeightedInput);
    }
    Ok(())
}

fn run_trials<F>(plan: &TrialPlan, trial: F) -> Result<ErrorProbability>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    plan.validate()?;
    let failed: Vec<bool> =
        (0..plan.trials).into_par_iter().map(|t| trial(plan.trial_seed(t))).collect::<Result<_>>()?;
    Ok(ErrorProbability::from_counts(failed.iter().filter(|&&f| f).count(), plan.trials))
}

/// Draws disjoint `n`-row subsamples `data` and `data'` from the data pool
/// and an `n`-row model subsample; a trial fails when
/// `Delta(data, data') >= Delta(data, model)`.
pub fn discrimination_test(
    data_pool: &EmbeddingSet,
    model_pool: &EmbeddingSet,
    metric: &dyn Metric,
    plan: &TrialPlan,
) -> Result<ErrorProbability> {
    let n = plan.n;
    check_pool(data_pool, 2 * n)?;
    check_pool(model_pool, n)?;
    data_pool.ensure_same_dim(model_pool)?;
    run_trials(plan, |seed| {
        let idx = sample_indices(data_pool.n(), 2 * n, derive_seed(seed, &[role::DATA]))?;
        let data = take(data_pool, &idx[..n])?;
        let data_prime = take(data_pool, &idx[n..])?;
        let model = take(model_pool, &sample_indices(model_pool.n(), n, derive_seed(seed, &[role::MODEL]))?)?;
        let v = metric.eval_against(&data, &[&data_prime, &model])?;
        Ok(v[0].value >= v[1].value)
    })
}

/// A trial fails unless `Delta(data, model_1) > ... > Delta(data, model_k)`.
pub fn monotonicity_test(
    data_pool: &EmbeddingSet,
    model_pools: &[&EmbeddingSet],
    metric: &dyn Metric,
    plan: &TrialPlan,
) -> Result<ErrorProbability> {
    let n = plan.n;
    if model_pools.len() < 2 {
        return Err(Error::InvalidParameter("monotonicity needs at least two model pools".into()));
    }
    check_pool(data_pool, n)?;
    for p in model_pools {
        check_pool(p, n)?;
        data_pool.ensure_same_dim(p)?;
    }
    run_trials(plan, |seed| {
        let data = take(data_pool, &sample_indices(data_pool.n(), n, derive_seed(seed, &[role::DATA]))?)?;
        let models: Vec<EmbeddingSet> = model_pools
            .iter()
            .enumerate()
            .map(|(j, p)| take(p, &sample_indices(p.n(), n, derive_seed(seed, &[role::MODEL, j as u64]))?))
            .collect::<Result<_>>()?;
        let refs: Vec<&EmbeddingSet> = models.iter().collect();
        let v = metric.eval_against(&data, &refs)?;
        Ok(!v.windows(2).all(|w| w[0].value > w[1].value))
    })
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("perturbation grid must be non-empty and strictly increasing".into()));
    }
    Ok(())
}

/// Compares an `n`-row reference with a disjoint `n`-row base corrupted at
/// each level; a trial fails unless
/// `Delta(data, p_1) <= ... <= Delta(data, p_k)`.
pub fn perturbation_test(
    data_pool: &EmbeddingSet,
    perturbation: &dyn Perturbation,
    grid: &[f64],
    metric: &dyn Metric,
    plan: &TrialPlan,
) -> Result<ErrorProbability> {
    check_grid(grid)?;
    let n = plan.n;
    check_pool(data_pool, 2 * n)?;
    run_trials(plan, |seed| {
        let idx = sample_indices(data_pool.n(), 2 * n, derive_seed(seed, &[role::DATA]))?;
        let data = take(data_pool, &idx[..n])?;
        let base = take(data_pool, &idx[n..])?;
        let perturbed: Vec<EmbeddingSet> = grid
            .iter()
            .enumerate()
            .map(|(j, &level)| perturbation.apply(&base, level, derive_seed(seed, &[role::LEVEL, j as u64])))
            .collect::<Result<_>>()?;
        let refs: Vec<&EmbeddingSet> = perturbed.iter().collect();
        let v = metric.eval_against(&data, &refs)?;
        Ok(!v.windows(2).all(|w| w[0].value <= w[1].value))
    })
}

/// One of the three protocols with its pools.
#[derive(Clone, Copy)]
pub enum Experiment<'a> {
    Discrimination { data: &'a EmbeddingSet, model: &'a EmbeddingSet },
    Monotonicity { data: &'a EmbeddingSet, models: &'a [&'a EmbeddingSet] },
    Perturbation { data: &'a EmbeddingSet, perturbation: &'a dyn Perturbation, grid: &'a [f64] },
}

impl Experiment<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Discrimination { .. } => "discrimination",
            Experiment::Monotonicity { .. } => "monotonicity",
            Experiment::Perturbation { .. } => "perturbation",
        }
    }

    pub fn run(&self, metric: &dyn Metric, plan: &TrialPlan) -> Result<ErrorProbability> {
        match *self {
            Experiment::Discrimination { data, model } => discrimination_test(data, model, metric, plan),
            Experiment::Monotonicity { data, models } => monotonicity_test(data, models, metric, plan),
            Experiment::Perturbation { data, perturbation, grid } => {
                perturbation_test(data, perturbation, grid, metric, plan)
            }
        }
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: String,
    pub metric: String,
    pub n: usize,
    pub trials: usize,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub seed: u64,
}

impl SweepRow {
    pub fn new(experiment: &str, metric: &str, plan: &TrialPlan, p: &ErrorProbability) -> Self {
        Self {
            experiment: experiment.to_string(),
            metric: metric.to_string(),
            n: plan.n,
            trials: p.trials,
            estimate: p.estimate,
            ci_lo: p.wilson_ci.0,
            ci_hi: p.wilson_ci.1,
            seed: plan.seed,
        }
    }
}

/// Seed used for sample size `n`, shared by every metric.
pub fn sample_size_seed(master: u64, n: usize) -> u64 {
    derive_seed(master, &[role::SAMPLE_SIZE, n as u64])
}

/// Runs `experiment` for every `(n, metric)` pair, `n`-major.
pub fn sample_size_sweep(
    experiment: &Experiment<'_>,
    n_grid: &[usize],
    metrics: &[&dyn Metric],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(n_grid.len() * metrics.len());
    for &n in n_grid {
        let plan = TrialPlan { n, trials, seed: sample_size_seed(seed, n) };
        for m in metrics {
            let p = experiment.run(*m, &plan).map_err(|e| e.in_metric(m.name()))?;
            rows.push(SweepRow::new(experiment.name(), m.name(), &plan, &p));
        }
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn read_rows_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Serialization(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Serialization(e.to_string()))).collect()
}
