//! Embedding-space perturbations applied at increasing strength.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding::{mix, EmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// A family of corruptions indexed by a level.
pub trait Perturbation: Sync {
    fn name(&self) -> &str;

    /// Corrupts `base` at strength `level`; the output has `base.n()` rows.
    fn apply(&self, base: &EmbeddingSet, level: f64, seed: u64) -> Result<EmbeddingSet>;
}

/// Replaces a `level` fraction of the rows by rows of another pool.
#[derive(Debug, Clone, Copy)]
pub struct Mixture<'a> {
    pub contaminant: &'a EmbeddingSet,
}

impl Perturbation for Mixture<'_> {
    fn name(&self) -> &str {
        "mixture"
    }

    fn apply(&self, base: &EmbeddingSet, level: f64, seed: u64) -> Result<EmbeddingSet> {
        mix(base, self.contaminant, level, base.n(), seed)
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `scale * level`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoise {
    pub scale: f64,
}

impl Perturbation for GaussianNoise {
    fn name(&self) -> &str {
        "gaussian_noise"
    }

    fn apply(&self, base: &EmbeddingSet, level: f64, seed: u64) -> Result<EmbeddingSet> {
        let std = self.scale * level;
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {std}")));
        }
        let mut rng = rng_from(seed);
        base.map(|_, _, v| v + std * rng.sample::<f64, _>(StandardNormal))
    }
}
