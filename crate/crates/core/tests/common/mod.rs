//! Oracles shared by the topic suites and the acceptance target. Each one recomputes
//! its quantity from definitions, independently of the library code path under test.
#![allow(dead_code)]

use fgwclust::encoder::{swapped_loss, Dims, GradientTape, ModelParams};
use fgwclust::graph::{gcn_normalize, AttributeGraph, NormalizedAdjacency};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_rows(n: usize, s: usize, rng: &mut impl Rng) -> Array2<f64> {
    let m = Array2::from_shape_simple_fn((n, s), || rng.random_range(0.05f64..1.0));
    let sums = m.sum_axis(Axis(1)).insert_axis(Axis(1));
    &m / &sums
}

pub fn random_graph(n: usize, p: f64, x: Array2<f64>, rng: &mut impl Rng) -> AttributeGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    AttributeGraph::from_edges(x, edges, None).unwrap().0
}

/// Two views, parameters with nonzero biases, and fixed targets.
pub struct GradInstance {
    pub views: [(NormalizedAdjacency, Array2<f64>); 2],
    pub params: ModelParams,
    pub q1: Array2<f64>,
    pub q2: Array2<f64>,
    pub tau: f64,
}

impl GradInstance {
    pub fn loss(&self, params: &ModelParams) -> f64 {
        let (_, out) = GradientTape::record(
            params,
            [
                (&self.views[0].0, &self.views[0].1),
                (&self.views[1].0, &self.views[1].1),
            ],
            self.tau,
        )
        .unwrap();
        swapped_loss(
            &self.q1.view(),
            &self.q2.view(),
            &out[0].p_tau.view(),
            &out[1].p_tau.view(),
        )
    }

    pub fn analytic(&self) -> ModelParams {
        let (tape, _) = GradientTape::record(
            &self.params,
            [
                (&self.views[0].0, &self.views[0].1),
                (&self.views[1].0, &self.views[1].1),
            ],
            self.tau,
        )
        .unwrap();
        tape.backward(&self.q1, &self.q2)
    }

    fn relu_margin(&self) -> f64 {
        let (tape, _) = GradientTape::record(
            &self.params,
            [
                (&self.views[0].0, &self.views[0].1),
                (&self.views[1].0, &self.views[1].1),
            ],
            self.tau,
        )
        .unwrap();
        tape.views()
            .iter()
            .map(|v| v.relu_margin())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Random N <= 8 instance whose ReLU pre-activations all sit at least `margin` away
/// from the kink, so a finite-difference step cannot flip an activation pattern.
pub fn grad_instance(seed: u64, margin: f64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..=8);
        let d0 = rng.random_range(2..=5);
        let dims = Dims {
            d1: rng.random_range(2..=5),
            d_h: rng.random_range(2..=5),
            d: rng.random_range(2..=4),
        };
        let s = rng.random_range(2..=4);
        let make_view = |rng: &mut ChaCha8Rng| {
            let x = Array2::from_shape_simple_fn((n, d0), || rng.random_range(-1.0..1.0));
            let g = random_graph(n, 0.5, x, rng);
            (gcn_normalize(&g), g.features().clone())
        };
        let views = [make_view(&mut rng), make_view(&mut rng)];
        let mut params = ModelParams::init(d0, dims, s, &mut rng);
        for b in [
            &mut params.gcn_bias,
            &mut params.proj_bias1,
            &mut params.proj_bias2,
        ] {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let inst = GradInstance {
            views,
            params,
            q1: random_rows(n, s, &mut rng),
            q2: random_rows(n, s, &mut rng),
            tau: rng.random_range(0.3..1.0),
        };
        if inst.relu_margin() >= margin {
            return inst;
        }
    }
}

/// Largest relative error between analytic and central-difference gradients, per
/// tensor, with `|a - fd| / max(|a|, |fd|, floor)`.
pub fn finite_difference_errors(
    inst: &GradInstance,
    h: f64,
    floor: f64,
) -> Vec<(&'static str, f64)> {
    let analytic = inst.analytic();
    let mut out = Vec::new();
    for (t, name) in ModelParams::TENSOR_NAMES.iter().enumerate() {
        let grad = analytic.tensors()[t].to_owned();
        let mut worst = 0.0f64;
        for (k, &g) in grad.iter().enumerate() {
            let mut plus = inst.params.clone();
            let mut minus = inst.params.clone();
            plus.tensors_mut()[t].as_slice_mut().unwrap()[k] += h;
            minus.tensors_mut()[t].as_slice_mut().unwrap()[k] -= h;
            let fd = (inst.loss(&plus) - inst.loss(&minus)) / (2.0 * h);
            let err = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
            worst = worst.max(err);
        }
        out.push((*name, worst));
    }
    out
}

/// Direct-formula clustering metrics, written from the textbook definitions.
pub mod metrics {
    /// Best accuracy over all label permutations (exhaustive, C <= 6).
    pub fn brute_force_acc(pred: &[usize], truth: &[usize], c: usize) -> (f64, Vec<usize>) {
        let mut best = (-1.0, Vec::new());
        let mut perm: Vec<usize> = (0..c).collect();
        permute(&mut perm, 0, &mut |p| {
            let hits = pred.iter().zip(truth).filter(|(&a, &b)| p[a] == b).count();
            let acc = hits as f64 / pred.len() as f64;
            if acc > best.0 {
                best = (acc, p.to_vec());
            }
        });
        best
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    pub fn macro_f1(mapped: &[usize], truth: &[usize], c: usize) -> f64 {
        let mut total = 0.0;
        for k in 0..c {
            let tp = mapped
                .iter()
                .zip(truth)
                .filter(|(&a, &b)| a == k && b == k)
                .count() as f64;
            let fp = mapped
                .iter()
                .zip(truth)
                .filter(|(&a, &b)| a == k && b != k)
                .count() as f64;
            let fneg = mapped
                .iter()
                .zip(truth)
                .filter(|(&a, &b)| a != k && b == k)
                .count() as f64;
            if tp > 0.0 {
                total += 2.0 * tp / (2.0 * tp + fp + fneg);
            }
        }
        total / c as f64
    }

    fn entropy(labels: &[usize], c: usize) -> f64 {
        let n = labels.len() as f64;
        (0..c)
            .map(|k| labels.iter().filter(|&&l| l == k).count() as f64 / n)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Mutual information over arithmetic-mean entropy; 1 when both are single blocks.
    pub fn nmi(a: &[usize], b: &[usize], c: usize) -> f64 {
        let n = a.len() as f64;
        let mut mi = 0.0;
        for i in 0..c {
            for j in 0..c {
                let nij = a.iter().zip(b).filter(|(&x, &y)| x == i && y == j).count() as f64;
                if nij == 0.0 {
                    continue;
                }
                let ni = a.iter().filter(|&&x| x == i).count() as f64;
                let nj = b.iter().filter(|&&y| y == j).count() as f64;
                mi += nij / n * (n * nij / (ni * nj)).ln();
            }
        }
        let (ha, hb) = (entropy(a, c), entropy(b, c));
        if ha == 0.0 && hb == 0.0 {
            return 1.0;
        }
        mi / ((ha + hb) / 2.0)
    }

    /// Pair-counting ARI over all unordered point pairs.
    pub fn ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut same_a, mut same_b) = (0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                same_a += sa as u8 as f64;
                same_b += sb as u8 as f64;
                both += (sa && sb) as u8 as f64;
            }
        }
        let pairs = (n * (n - 1) / 2) as f64;
        let expected = same_a * same_b / pairs;
        let max = (same_a + same_b) / 2.0;
        if max == expected {
            return 1.0;
        }
        (both - expected) / (max - expected)
    }
}
