//! Command-line flags, config-file merging and value parsing.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use mind_core::kernel::{Bandwidth, Estimator, KernelMode};
use mind_core::ot::{Alpha, Epsilon};
use mind_core::{Format, MetricConfig, MetricKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Field-wise `self.or(other)`.
pub trait Merge {
    fn merge(self, fallback: Self) -> Self;
}

macro_rules! impl_merge {
    ($ty:ty { $($group:ident),* ; $($field:ident),* }) => {
        impl Merge for $ty {
            fn merge(self, fallback: Self) -> Self {
                Self {
                    $($group: self.$group.merge(fallback.$group),)*
                    $($field: self.$field.or(fallback.$field),)*
                }
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// First embedding file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<PathBuf>,
    /// Second embedding file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,
    /// Input encoding: binary or csv. Guessed from the extension when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    /// Output encoding: json or csv [default: json].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out_file: Option<PathBuf>,
}

impl_merge!(Common { ; a, b, format, seed, threads, output, out_file });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricFlags {
    /// One of mind, fid, mufid, sigmafid, mmd, sinkhorn.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    /// Comma-separated metric names.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<String>,
    /// Random directions for MIND and sliced FID [default: 1000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projections: Option<usize>,
    /// MIND scale: auto (3d) or a positive value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    /// Sinkhorn regularization: auto, an absolute value, or `<r>*mean`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<String>,
    /// MMD bandwidth: median or a positive value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<String>,
    /// MMD estimator: u or v [default: u].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd_estimator: Option<String>,
    /// MMD kernel evaluation: tiled or full [default: tiled].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    /// Tile edge for tiled MMD [default: 512].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tile: Option<usize>,
    /// Sinkhorn split-half correction: on or off [default: on].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_correction: Option<String>,
    /// Sinkhorn iteration cap [default: 5000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Sinkhorn marginal tolerance [default: 1e-6].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

impl_merge!(MetricFlags { ; metric, metrics, projections, alpha, epsilon, sigma, mmd_estimator, kernel, tile, split_correction, max_iter, tol });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComputeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricFlags,
    /// Subsample both inputs to this many rows.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl_merge!(ComputeArgs { common, metric ; n });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackArgs {
    // --a is the data set, --b the initial set
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricFlags,
    /// Comma-separated interpolation levels [default: 0,0.25,0.5,0.75,1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<String>,
}

impl_merge!(AttackArgs { common, metric ; t_grid });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricFlags,
    /// discrimination, monotonicity or perturbation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    /// Trials per sample size [default: 512].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Comma-separated perturbation levels [default: 0.01,0.03,0.05,0.07,0.10].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<String>,
    /// Comma-separated model pool files, best first.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pools: Option<String>,
    /// mixture (contaminant from `--b`) or noise [default: mixture].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<String>,
    /// Noise standard deviation per unit level [default: 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
}

impl_merge!(HarnessArgs { common, metric ; experiment, n, trials, eps, pools, perturbation, noise_scale });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric: MetricFlags,
    /// Comma-separated sample sizes [default: 1000,5000].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    /// Comma-separated dimensions [default: 2048].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<String>,
    /// Timed repetitions per cell [default: 5].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
}

impl_merge!(BenchArgs { common, metric ; n, d, reps });

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvertArgs {
    // --a is the input, --out-file the output
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Output encoding: binary or csv. Guessed from the extension when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
}

impl_merge!(ConvertArgs { common ; to });

/// Reads a config file: either a bare settings object or a report whose
/// `config` field holds one.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::file(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::file(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("config").filter(|c| c.is_object()) {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

pub fn parse_list<T: FromStr>(flag: &str, raw: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Failure::usage(format!("--{flag}: `{s}`: {e}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(Failure::usage(format!("--{flag} is empty")));
    }
    Ok(items)
}

pub fn parse_kind(name: &str) -> Result<MetricKind, Failure> {
    name.trim().parse::<MetricKind>().map_err(|_| Failure::unknown_metric(name))
}

pub fn format_for(explicit: Option<&str>, path: &Path) -> Result<Format, Failure> {
    match explicit {
        Some(f) => f.parse::<Format>().map_err(|e| Failure::usage(e.to_string())),
        None => Ok(Format::from_path(path)),
    }
}

fn positive(flag: &str, raw: &str) -> Result<f64, Failure> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Failure::usage(format!("--{flag}: expected a positive number, got `{raw}`"))),
    }
}

fn parse_alpha(raw: &str) -> Result<Alpha, Failure> {
    match raw.trim() {
        "auto" => Ok(Alpha::Auto),
        v => positive("alpha", v).map(Alpha::Explicit),
    }
}

fn parse_epsilon(raw: &str) -> Result<Epsilon, Failure> {
    let raw = raw.trim();
    if raw == "auto" {
        return Ok(Epsilon::Auto);
    }
    match raw.strip_suffix("*mean") {
        Some(r) => positive("epsilon", r).map(Epsilon::Relative),
        None => positive("epsilon", raw).map(Epsilon::Absolute),
    }
}

fn parse_sigma(raw: &str) -> Result<Bandwidth, Failure> {
    match raw.trim() {
        "median" => Ok(Bandwidth::Median),
        v => positive("sigma", v).map(Bandwidth::Explicit),
    }
}

fn parse_switch(flag: &str, raw: &str) -> Result<bool, Failure> {
    match raw.trim() {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(Failure::usage(format!("--{flag}: expected on or off, got `{other}`"))),
    }
}

impl MetricFlags {
    /// Names from `--metrics`, else `--metric`, else `default`.
    pub fn kinds(&self, default: &str) -> Result<Vec<MetricKind>, Failure> {
        let raw = self.metrics.as_deref().or(self.metric.as_deref()).unwrap_or(default);
        let names: Vec<String> = parse_list("metrics", raw)?;
        names.iter().map(|n| parse_kind(n)).collect()
    }

    /// Metric settings seeded from `seed` with every flag applied.
    pub fn config(&self, kind: MetricKind, seed: u64) -> Result<MetricConfig, Failure> {
        let mut cfg = MetricConfig::new(kind).with_seed(seed);
        if let Some(m) = self.projections {
            cfg.mind.projections = m;
            cfg.sigma_fid.projections = m;
        }
        if let Some(a) = &self.alpha {
            cfg.mind.alpha = parse_alpha(a)?;
        }
        if let Some(e) = &self.epsilon {
            cfg.sinkhorn.epsilon = parse_epsilon(e)?;
        }
        if let Some(s) = &self.sigma {
            cfg.mmd.sigma = parse_sigma(s)?;
        }
        if let Some(e) = &self.mmd_estimator {
            cfg.mmd.estimator = match e.trim() {
                "u" | "U" => Estimator::U,
                "v" | "V" => Estimator::V,
                other => return Err(Failure::usage(format!("--mmd-estimator: expected u or v, got `{other}`"))),
            };
        }
        let tile = self.tile.unwrap_or(512);
        cfg.mmd.mode = match self.kernel.as_deref().map(str::trim) {
            None | Some("tiled") => KernelMode::Tiled { tile },
            Some("full") => KernelMode::Full,
            Some(other) => return Err(Failure::usage(format!("--kernel: expected tiled or full, got `{other}`"))),
        };
        if let Some(s) = &self.split_correction {
            cfg.sinkhorn.split_correction = parse_switch("split-correction", s)?;
        }
        if let Some(it) = self.max_iter {
            cfg.sinkhorn.max_iter = it;
        }
        if let Some(t) = self.tol {
            cfg.sinkhorn.tol = t;
        }
        cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(cfg)
    }
}
