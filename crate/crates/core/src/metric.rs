//! A common interface over every distance in the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::kernel::{mmd, MmdConfig};
use crate::moments::{fid, mu_fid, sigma_fid, FidReference, FidResult, SigmaFidConfig};
use crate::ot::sliced::mind_against;
use crate::ot::{mind, sinkhorn_divergence, MindConfig, SinkhornConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Mind,
    Fid,
    MuFid,
    SigmaFid,
    Mmd,
    Sinkhorn,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] =
        [MetricKind::Mind, MetricKind::Fid, MetricKind::MuFid, MetricKind::SigmaFid, MetricKind::Mmd, MetricKind::Sinkhorn];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mind => "mind",
            MetricKind::Fid => "fid",
            MetricKind::MuFid => "mufid",
            MetricKind::SigmaFid => "sigmafid",
            MetricKind::Mmd => "mmd",
            MetricKind::Sinkhorn => "sinkhorn",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric '{s}'")))
    }
}

/// Diagnostic attached to a metric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// A covariance estimate is singular because `n <= d`.
    RankDeficient,
    /// An iterative solver stopped before reaching its tolerance.
    NotConverged,
    /// A negative rounding result was clamped to zero.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    /// Value before clamping, when it differs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub raw: Option<f64>,
    #[serde(default)]
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub resolved: Resolved,
}

/// Parameters fixed during an evaluation from the inputs themselves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
}

impl MetricValue {
    pub fn plain(value: f64) -> Self {
        Self { value, raw: None, flags: Vec::new(), resolved: Resolved::default() }
    }

    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }
}

impl From<FidResult> for MetricValue {
    fn from(r: FidResult) -> Self {
        let mut flags = Vec::new();
        if r.rank_deficient {
            flags.push(Flag::RankDeficient);
        }
        if r.clamped() {
            flags.push(Flag::Clamped);
        }
        Self { value: r.value, raw: r.clamped().then_some(r.raw), flags, resolved: Resolved::default() }
    }
}

/// A distance `Delta(a, b)` between two embedding sets.
pub trait Metric: Sync {
    fn name(&self) -> &str;

    fn eval(&self, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricValue>;

    /// `Delta(reference, other)` for each of `others`; implementations may
    /// share work on the reference but must agree with [`Metric::eval`].
    fn eval_against(&self, reference: &EmbeddingSet, others: &[&EmbeddingSet]) -> Result<Vec<MetricValue>> {
        others.iter().map(|o| self.eval(reference, o)).collect()
    }
}

/// Adapts a closure into a [`Metric`].
pub struct FnMetric<F> {
    name: String,
    f: F,
}

impl<F> FnMetric<F>
where
    F: Fn(&EmbeddingSet, &EmbeddingSet) -> Result<f64> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Metric for FnMetric<F>
where
    F: Fn(&EmbeddingSet, &EmbeddingSet) -> Result<f64> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn eval(&self, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricValue> {
        (self.f)(a, b).map(MetricValue::plain)
    }
}

/// A named metric together with the settings of every metric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub mind: MindConfig,
    pub sigma_fid: SigmaFidConfig,
    pub mmd: MmdConfig,
    pub sinkhorn: SinkhornConfig,
}

impl MetricConfig {
    pub fn new(kind: MetricKind) -> Self {
        Self {
            kind,
            mind: MindConfig::default(),
            sigma_fid: SigmaFidConfig::default(),
            mmd: MmdConfig::default(),
            sinkhorn: SinkhornConfig::default(),
        }
    }

    /// Seeds every randomized component from one master seed. MIND and
    /// sliced FID share directions.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let directions = derive_seed(seed, &[crate::rng::role::DIRECTIONS]);
        self.mind.seed = directions;
        self.sigma_fid.seed = directions;
        self.sinkhorn.seed = derive_seed(seed, &[crate::rng::role::SPLIT]);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MetricKind::Mind => self.mind.validate(),
            MetricKind::SigmaFid => self.sigma_fid.validate(),
            MetricKind::Mmd => self.mmd.validate(),
            MetricKind::Sinkhorn => self.sinkhorn.validate(),
            MetricKind::Fid | MetricKind::MuFid => Ok(()),
        }
    }

    fn eval_inner(&self, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricValue> {
        Ok(match self.kind {
            MetricKind::Mind => {
                let r = mind(a, b, &self.mind)?;
                MetricValue { resolved: Resolved { alpha: Some(r.alpha), ..Resolved::default() }, ..MetricValue::plain(r.value) }
            }
            MetricKind::Fid => fid(a, b)?.into(),
            MetricKind::MuFid => MetricValue::plain(mu_fid(a, b)?),
            MetricKind::SigmaFid => MetricValue::plain(sigma_fid(a, b, &self.sigma_fid)?),
            MetricKind::Mmd => {
                let r = mmd(a, b, &self.mmd)?;
                MetricValue { resolved: Resolved { sigma: Some(r.sigma), ..Resolved::default() }, ..MetricValue::plain(r.value) }
            }
            MetricKind::Sinkhorn => {
                let r = sinkhorn_divergence(a, b, &self.sinkhorn)?;
                let flags = if r.converged { Vec::new() } else { vec![Flag::NotConverged] };
                let resolved = Resolved { epsilon: Some(r.epsilon), ..Resolved::default() };
                MetricValue { value: r.value, raw: None, flags, resolved }
            }
        })
    }
}

impl Metric for MetricConfig {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn eval(&self, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricValue> {
        self.eval_inner(a, b).map_err(|e| e.in_metric(self.kind.name()))
    }

    fn eval_against(&self, reference: &EmbeddingSet, others: &[&EmbeddingSet]) -> Result<Vec<MetricValue>> {
        let run = || -> Result<Vec<MetricValue>> {
            match self.kind {
                MetricKind::Mind => {
                    let alpha = |r: &crate::ot::MindResult| Resolved { alpha: Some(r.alpha), ..Resolved::default() };
                    Ok(mind_against(reference, others, &self.mind)?
                        .iter()
                        .map(|r| MetricValue { resolved: alpha(r), ..MetricValue::plain(r.value) })
                        .collect())
                }
                MetricKind::Fid => {
                    let r = FidReference::from_set(reference)?;
                    others.iter().map(|o| r.fid_to_set(reference, o).map(MetricValue::from)).collect()
                }
                _ => others.iter().map(|o| self.eval_inner(reference, o)).collect(),
            }
        };
        run().map_err(|e| e.in_metric(self.kind.name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips_through_names() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!("frechet".parse::<MetricKind>().is_err());
    }

    #[test]
    fn against_matches_pairwise() {
        let r = EmbeddingSet::from_rows(&[[0.0, 1.0], [2.0, 3.0], [1.0, -1.0], [0.5, 0.5]]).unwrap();
        let x = EmbeddingSet::from_rows(&[[1.0, 1.0], [0.3, 3.0], [2.0, 0.0], [1.0, 2.0]]).unwrap();
        let y = EmbeddingSet::from_rows(&[[3.0, 1.0], [0.0, 0.0], [2.0, 1.0], [1.5, 2.0]]).unwrap();
        for k in MetricKind::ALL {
            let cfg = MetricConfig::new(k).with_seed(5);
            let both = cfg.eval_against(&r, &[&x, &y]).unwrap();
            assert_eq!(both[0], cfg.eval(&r, &x).unwrap(), "{k}");
            assert_eq!(both[1], cfg.eval(&r, &y).unwrap(), "{k}");
        }
    }

    #[test]
    fn errors_name_the_metric() {
        let a = EmbeddingSet::from_rows(&[[0.0, 1.0]]).unwrap();
        let b = EmbeddingSet::from_rows(&[[0.0, 1.0, 2.0]]).unwrap();
        let err = MetricConfig::new(MetricKind::Mind).eval(&a, &b).unwrap_err();
        assert!(err.to_string().contains("mind"), "{err}");
    }

    #[test]
    fn fid_flags_small_samples() {
        let a = EmbeddingSet::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 0.0]]).unwrap();
        let v = MetricConfig::new(MetricKind::Fid).eval(&a, &a).unwrap();
        assert!(v.has(Flag::RankDeficient));
    }
}
