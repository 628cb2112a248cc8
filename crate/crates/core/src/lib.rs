//! Graph node clustering with swapped fused Gromov-Wasserstein assignments against
//! learnable prototypes.
//!
//! Pipeline: [`training::train`] fits a GCN encoder and prototypes on two augmented
//! views per epoch; [`training::infer`] maps every node to its prototype similarities
//! `R`; [`kmeans::kmeans`] clusters `R`; [`metrics::evaluate`] scores the clusters.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod fgm;
pub mod graph;
pub mod kmeans;
pub mod metrics;
pub mod ot;
pub mod prototypes;
pub mod sparse;
pub mod training;

pub use error::{Error, Result};
