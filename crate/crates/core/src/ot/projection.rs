//! Random unit directions and block-wise projection of embedding sets.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Directions projected together in one matrix product.
pub(crate) const BLOCK: usize = 32;

/// `M` unit vectors in dimension `d`, a pure function of `(seed, M, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    directions: Vec<f64>,
    m: usize,
    d: usize,
    seed: u64,
}

impl ProjectionSet {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `M x d` matrix of directions.
    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i * self.d..(i + 1) * self.d]
    }
}

/// Writes direction `index` of the stream `seed` into `out`.
///
/// Each direction comes from its own generator stream, so direction `i`
/// does not depend on how many directions are drawn.
pub(crate) fn fill_direction(seed: u64, index: u64, out: &mut [f64]) {
    let mut rng = stream_rng(seed, index);
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Draws `m` directions uniformly on the unit sphere of dimension `d`.
pub fn sample_directions(m: usize, d: usize, seed: u64) -> Result<ProjectionSet> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("need M >= 1 and d >= 1 (got M={m}, d={d})")));
    }
    let mut directions = vec![0.0; m * d];
    directions
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| fill_direction(seed, i as u64, row));
    Ok(ProjectionSet { directions, m, d, seed })
}

/// Where the directions of a sliced estimate come from.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Directions<'a> {
    Given(&'a ProjectionSet),
    /// Generated block by block, never materialized in full.
    Seeded { seed: u64, m: usize },
}

impl Directions<'_> {
    pub(crate) fn count(&self) -> usize {
        match self {
            Directions::Given(p) => p.m,
            Directions::Seeded { m, .. } => *m,
        }
    }

    fn block(&self, start: usize, len: usize, d: usize) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Directions::Given(p) => std::borrow::Cow::Borrowed(&p.directions[start * d..(start + len) * d]),
            Directions::Seeded { seed, .. } => {
                let mut buf = vec![0.0; len * d];
                for (k, row) in buf.chunks_exact_mut(d).enumerate() {
                    fill_direction(*seed, (start + k) as u64, row);
                }
                std::borrow::Cow::Owned(buf)
            }
        }
    }
}

/// `n x k` matrix of projections of every row of `set` on `k` directions.
pub(crate) fn project(set: &EmbeddingSet, dirs: &[f64], k: usize) -> Mat<f64> {
    let u = MatRef::from_row_major_slice(dirs, k, set.d());
    let mut out = Mat::<f64>::zeros(set.n(), k);
    matmul(out.as_mut(), Accum::Replace, set.as_mat(), u.transpose(), 1.0, Par::Seq);
    out
}

/// Projects every set on consecutive blocks of directions and maps `f` over
/// the blocks in parallel; results come back in block order.
pub(crate) fn map_blocks<T, F>(sets: &[&EmbeddingSet], dirs: Directions<'_>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[Mat<f64>]) -> T + Sync,
{
    let d = sets[0].d();
    let m = dirs.count();
    let blocks = m.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let len = BLOCK.min(m - start);
            let u = dirs.block(start, len, d);
            let projected: Vec<Mat<f64>> = sets.iter().map(|s| project(s, &u, len)).collect();
            f(&projected)
        })
        .collect()
}
