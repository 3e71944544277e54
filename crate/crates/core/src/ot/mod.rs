//! Optimal transport: exact 1D transport by sorting, random projections,
//! the sliced Wasserstein / MIND estimator and entropic (Sinkhorn) transport.

pub mod one_dim;
pub mod projection;
pub mod sinkhorn;
pub mod sliced;

pub use one_dim::{w2_1d, w2_1d_weighted};
pub use projection::{sample_directions, ProjectionSet};
pub use sinkhorn::{sinkhorn_cost, sinkhorn_divergence, Epsilon, SinkhornConfig, SinkhornDivergence, SinkhornResult};
pub use sliced::{mind, sliced_w2, sliced_w2_estimate, Alpha, MindConfig, MindResult, SlicedEstimate};
