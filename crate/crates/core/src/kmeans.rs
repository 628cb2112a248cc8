//! Lloyd's algorithm with k-means++ seeding and best-of-`n_init` restarts.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cluster ids in `[0, n_clusters)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some(&label) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: n_clusters,
            });
        }
        Ok(Self { labels, n_clusters })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_clusters];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: ClusterLabels,
    pub centers: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each center update of the winning restart.
    pub inertia_trace: Vec<f64>,
    pub n_iter: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: &ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    centers.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (d, r) in d2.iter_mut().zip(x.rows()) {
            *d = d.min(sq_dist(r, centers.row(c)));
        }
    }
    centers
}

/// Nearest center per point; ties go to the lower center index.
fn assign(x: &ArrayView2<'_, f64>, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    x.rows()
        .into_iter()
        .map(|r| {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.rows().into_iter().enumerate() {
                let d = sq_dist(r, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// Gives every empty cluster the point farthest from its center, taken from a cluster
/// that keeps at least one member.
fn repair_empty(
    x: &ArrayView2<'_, f64>,
    labels: &mut [usize],
    dist: &mut [f64],
    centers: &mut Array2<f64>,
) {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= n guarantees a cluster with two members");
        sizes[labels[donor]] -= 1;
        sizes[c] = 1;
        labels[donor] = c;
        dist[donor] = 0.0;
        centers.row_mut(c).assign(&x.row(donor));
    }
}

fn means(x: &ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (r, &l) in x.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &r;
        counts[l] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        row /= c as f64;
    }
    sums
}

fn inertia(x: &ArrayView2<'_, f64>, labels: &[usize], centers: &Array2<f64>) -> f64 {
    x.rows()
        .into_iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, centers.row(l)))
        .sum()
}

fn lloyd(x: &ArrayView2<'_, f64>, k: usize, max_iter: usize, rng: &mut impl Rng) -> KMeansFit {
    let mut centers = kmeans_pp(x, k, rng);
    let (mut labels, mut dist) = assign(x, &centers);
    repair_empty(x, &mut labels, &mut dist, &mut centers);
    let mut trace = Vec::new();
    let mut n_iter = 0;
    while n_iter < max_iter {
        n_iter += 1;
        centers = means(x, &labels, k);
        trace.push(inertia(x, &labels, &centers));
        let (mut next, mut next_dist) = assign(x, &centers);
        repair_empty(x, &mut next, &mut next_dist, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = inertia(x, &labels, &centers);
    KMeansFit {
        labels: ClusterLabels {
            labels,
            n_clusters: k,
        },
        centers,
        inertia,
        inertia_trace: trace,
        n_iter,
    }
}

/// Best-inertia clustering of the rows of `x` into `k` groups. Restart `r` draws from
/// stream `r` of the seeded generator, so restarts run in parallel reproducibly.
pub fn kmeans(x: &ArrayView2<'_, f64>, k: usize, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    if cfg.n_init == 0 {
        return Err(Error::Config("n_init must be at least 1".into()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    let fits: Vec<KMeansFit> = (0..cfg.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            lloyd(x, k, cfg.max_iter, &mut rng)
        })
        .collect();
    Ok(fits
        .into_iter()
        .reduce(|best, f| if f.inertia < best.inertia { f } else { best })
        .expect("n_init >= 1"))
}
