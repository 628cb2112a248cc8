use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AttributeGraph;
use crate::error::{Error, Result};

/// Stochastic block model with Gaussian node features around per-block centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n_per_block: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_centers: Vec<Vec<f64>>,
    pub noise: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_per_block.is_empty() {
            return bad("at least one block is required".into());
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name}={p} is not a probability"));
            }
        }
        if self.p_in <= self.p_out {
            return bad(format!(
                "p_in={} must exceed p_out={}",
                self.p_in, self.p_out
            ));
        }
        if self.feature_centers.len() != self.n_per_block.len() {
            return bad(format!(
                "{} feature centers for {} blocks",
                self.feature_centers.len(),
                self.n_per_block.len()
            ));
        }
        let d0 = self.feature_centers[0].len();
        if d0 == 0 || self.feature_centers.iter().any(|c| c.len() != d0) {
            return bad("feature centers must share one non-zero dimension".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise={} must be a finite stddev", self.noise));
        }
        Ok(())
    }

    /// Expected number of undirected edges.
    pub fn expected_edges(&self) -> f64 {
        let n: usize = self.n_per_block.iter().sum();
        let total_pairs = (n * n.saturating_sub(1) / 2) as f64;
        let within: f64 = self
            .n_per_block
            .iter()
            .map(|&b| (b * b.saturating_sub(1) / 2) as f64)
            .sum();
        within * self.p_in + (total_pairs - within) * self.p_out
    }
}

/// Samples a graph; labels are block ids. Node pairs are drawn in `(i, j)`
/// lexicographic order, then features row by row.
pub fn generate_sbm(spec: &SbmSpec) -> Result<AttributeGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = spec
        .n_per_block
        .iter()
        .enumerate()
        .flat_map(|(b, &count)| std::iter::repeat_n(b, count))
        .collect();
    let n = labels.len();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }

    let d0 = spec.feature_centers[0].len();
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = Array2::zeros((n, d0));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let center = &spec.feature_centers[labels[i]];
        for (v, c) in row.iter_mut().zip(center) {
            *v = c + normal.sample(&mut rng);
        }
    }

    Ok(AttributeGraph::from_edges(x, edges, Some(labels))?.0)
}
