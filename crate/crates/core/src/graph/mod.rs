//! Attribute graphs, GCN normalization and two-view augmentation.

mod convert;
mod io;
mod sbm;

pub use convert::{convert_linqs, LinqsDataset};
pub use io::{
    load_dir, load_graph, read_edge_list, read_features, read_labels, write_dir, write_edge_list,
    write_features_csv, write_labels, DataFiles,
};
pub use sbm::{generate_sbm, SbmSpec};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected attributed graph with optional ground-truth classes.
///
/// The adjacency is binary and symmetric with an empty diagonal; each undirected
/// edge is stored in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGraph {
    adjacency: CsrMatrix,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    n_classes: Option<usize>,
}

/// What [`AttributeGraph::from_edges`] discarded while building the adjacency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl AttributeGraph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized,
    /// duplicates collapsed and self-loops dropped. The node count is the number of
    /// feature rows.
    pub fn from_edges(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
    ) -> Result<(Self, EdgeStats)> {
        let n = features.nrows();
        let mut stats = EdgeStats::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            let id = u.max(v);
            if id >= n {
                return Err(Error::Shape(format!(
                    "node id {id} out of range for {n} nodes"
                )));
            }
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        stats.duplicates = before - pairs.len();
        let g = Self::from_undirected(features, &pairs, labels)?;
        Ok((g, stats))
    }

    /// `pairs` must be strictly upper-triangular and duplicate free.
    fn from_undirected(
        features: Array2<f64>,
        pairs: &[(usize, usize)],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = features.nrows();
        let adjacency = CsrMatrix::from_triplets(
            n,
            n,
            pairs.iter().flat_map(|&(u, v)| [(u, v, 1.0), (v, u, 1.0)]),
        )?;
        let n_classes = match &labels {
            Some(l) => {
                if l.len() != n {
                    return Err(Error::RowMismatch {
                        what: "labels",
                        expected: n,
                        got: l.len(),
                    });
                }
                Some(l.iter().max().map_or(0, |&m| m + 1))
            }
            None => None,
        };
        Ok(Self {
            adjacency,
            features,
            labels,
            n_classes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.n_classes
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_nodes())
            .flat_map(|u| {
                self.adjacency
                    .row(u)
                    .filter(move |&(v, _)| v > u)
                    .map(move |(v, _)| (u, v))
            })
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .map(|i| self.adjacency.row_nnz(i))
            .collect()
    }
}

/// Edge and feature-dimension drop rates for one augmented view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pe: f64,
    px: f64,
    seed: u64,
}

impl AugmentationConfig {
    pub fn new(pe: f64, px: f64, seed: u64) -> Result<Self> {
        for (name, rate) in [("pe", pe), ("px", px)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name}={rate} must lie in [0, 1)")));
            }
        }
        Ok(Self { pe, px, seed })
    }

    pub fn pe(&self) -> f64 {
        self.pe
    }

    pub fn px(&self) -> f64 {
        self.px
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// `floor(rate * count)`, tolerant of products like `0.29 * 100` landing just below an integer.
pub(crate) fn drop_count(rate: f64, count: usize) -> usize {
    ((rate * count as f64) + 1e-9).floor() as usize
}

/// Drops `floor(pe * E)` undirected edges and zeroes `floor(px * d0)` feature columns,
/// both chosen uniformly without replacement. Edges are sampled before columns.
pub fn augment<R: Rng + ?Sized>(
    g: &AttributeGraph,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> AttributeGraph {
    let edges = g.edges();
    let n_drop = drop_count(cfg.pe, edges.len());
    let mut keep = vec![true; edges.len()];
    for i in rand::seq::index::sample(rng, edges.len(), n_drop) {
        keep[i] = false;
    }
    let kept: Vec<(usize, usize)> = edges
        .iter()
        .zip(&keep)
        .filter_map(|(&e, &k)| k.then_some(e))
        .collect();

    let mut features = g.features.clone();
    let d0 = features.ncols();
    for col in rand::seq::index::sample(rng, d0, drop_count(cfg.px, d0)) {
        features.column_mut(col).fill(0.0);
    }

    AttributeGraph::from_undirected(features, &kept, g.labels.clone())
        .expect("subgraph of a valid graph is valid")
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.n_rows()
    }
}

pub fn gcn_normalize(g: &AttributeGraph) -> NormalizedAdjacency {
    let n = g.n_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let with_loops = CsrMatrix::from_triplets(
        n,
        n,
        (0..n)
            .flat_map(|i| g.adjacency.row(i).map(move |(j, v)| (i, j, v)))
            .chain((0..n).map(|i| (i, i, 1.0))),
    )
    .expect("indices in range");
    NormalizedAdjacency(with_loops.map_values(|i, j, v| v * inv_sqrt[i] * inv_sqrt[j]))
}
