//! Distributional distances between sets of embedding vectors.
//!
//! The headline metric is MIND, an `alpha`-scaled Monte-Carlo sliced
//! Wasserstein distance computed by sorting 1D projections. Alongside it the
//! crate provides FID and its mean-only and sliced variants, Gaussian-kernel
//! MMD, the debiased Sinkhorn divergence, a moment-matching attack
//! constructor, hypothesis-testing harnesses and a walltime/memory bench.

pub mod bench;
pub mod embedding;
pub mod error;
pub mod hacking;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod metric;
pub mod moments;
pub mod ot;
pub mod rng;

pub use embedding::{load_embeddings, mix, save_embeddings, subsample, EmbeddingSet, Format};
pub use error::{Error, Result};
pub use linalg::{summarize, GaussianSummary};
pub use metric::{Flag, FnMetric, Metric, MetricConfig, MetricKind, MetricValue, Resolved};
pub use ot::{mind, sliced::mind_against, MindConfig};

pub use faer;
