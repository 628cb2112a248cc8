//! Graph encoder, prototype head and the swapped-prediction objective.
//!
//! The network is one GCN layer followed by a two-layer ReLU projector whose output
//! rows are L2-normalized:
//!
//! ```text
//! H = relu(Â X W + b)
//! Z = rownorm(relu(H W1 + b1) W2 + b2)
//! R = Z rownorm(S)^T
//! ```
//!
//! Gradients are derived by hand for this fixed architecture. A [`GradientTape`]
//! records both augmented views of one training step and is consumed by
//! [`GradientTape::backward`].

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Hidden widths: GCN output `d1`, projector hidden `d_h`, embedding `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d1: usize,
    pub d_h: usize,
    pub d: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d1: 256,
            d_h: 256,
            d: 64,
        }
    }
}

/// Trainable tensors. Weight matrices are stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gcn_weight: Array2<f64>,
    pub gcn_bias: Array1<f64>,
    pub proj_weight1: Array2<f64>,
    pub proj_bias1: Array1<f64>,
    pub proj_weight2: Array2<f64>,
    pub proj_bias2: Array1<f64>,
    pub prototypes: Array2<f64>,
}

impl ModelParams {
    pub const TENSOR_NAMES: [&'static str; 7] = [
        "gcn_weight",
        "gcn_bias",
        "proj_weight1",
        "proj_bias1",
        "proj_weight2",
        "proj_bias2",
        "prototypes",
    ];

    /// Kaiming-uniform weights and prototypes, zero biases.
    pub fn init<R: Rng + ?Sized>(d0: usize, dims: Dims, n_prototypes: usize, rng: &mut R) -> Self {
        Self {
            gcn_weight: kaiming_init((d0, dims.d1), d0, rng),
            gcn_bias: Array1::zeros(dims.d1),
            proj_weight1: kaiming_init((dims.d1, dims.d_h), dims.d1, rng),
            proj_bias1: Array1::zeros(dims.d_h),
            proj_weight2: kaiming_init((dims.d_h, dims.d), dims.d_h, rng),
            proj_bias2: Array1::zeros(dims.d),
            prototypes: kaiming_init((n_prototypes, dims.d), dims.d, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gcn_weight: Array2::zeros(self.gcn_weight.raw_dim()),
            gcn_bias: Array1::zeros(self.gcn_bias.raw_dim()),
            proj_weight1: Array2::zeros(self.proj_weight1.raw_dim()),
            proj_bias1: Array1::zeros(self.proj_bias1.raw_dim()),
            proj_weight2: Array2::zeros(self.proj_weight2.raw_dim()),
            proj_bias2: Array1::zeros(self.proj_bias2.raw_dim()),
            prototypes: Array2::zeros(self.prototypes.raw_dim()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.gcn_weight.nrows()
    }

    pub fn n_prototypes(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d1: self.gcn_weight.ncols(),
            d_h: self.proj_weight1.ncols(),
            d: self.proj_weight2.ncols(),
        }
    }

    /// Tensors in [`Self::TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [ArrayViewD<'_, f64>; 7] {
        [
            self.gcn_weight.view().into_dyn(),
            self.gcn_bias.view().into_dyn(),
            self.proj_weight1.view().into_dyn(),
            self.proj_bias1.view().into_dyn(),
            self.proj_weight2.view().into_dyn(),
            self.proj_bias2.view().into_dyn(),
            self.prototypes.view().into_dyn(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [ArrayViewMutD<'_, f64>; 7] {
        [
            self.gcn_weight.view_mut().into_dyn(),
            self.gcn_bias.view_mut().into_dyn(),
            self.proj_weight1.view_mut().into_dyn(),
            self.proj_bias1.view_mut().into_dyn(),
            self.proj_weight2.view_mut().into_dyn(),
            self.proj_bias2.view_mut().into_dyn(),
            self.prototypes.view_mut().into_dyn(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_consistent(&self) -> Result<()> {
        let d = self.dims();
        let ok = self.gcn_bias.len() == d.d1
            && self.proj_weight1.nrows() == d.d1
            && self.proj_bias1.len() == d.d_h
            && self.proj_weight2.nrows() == d.d_h
            && self.proj_bias2.len() == d.d
            && self.prototypes.ncols() == d.d;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent parameter shapes".into()))
        }
    }
}

/// Uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`, the ReLU-gain Kaiming bound
/// (variance `2 / fan_in`).
pub fn kaiming_init<R: Rng + ?Sized>(
    shape: (usize, usize),
    fan_in: usize,
    rng: &mut R,
) -> Array2<f64> {
    assert!(fan_in >= 1, "fan_in must be positive");
    let bound = (6.0 / fan_in as f64).sqrt();
    Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..=bound))
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn add_row(m: &mut Array2<f64>, b: &Array1<f64>) {
    *m += &b.view().insert_axis(Axis(0));
}

/// Row L2 normalization; zero rows stay zero. Returns the normalized matrix and the norms.
fn normalize_rows(m: &ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let norms: Array1<f64> = m.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut out = m.to_owned();
    for (mut row, &n) in out.rows_mut().into_iter().zip(&norms) {
        if n > 0.0 {
            row /= n;
        }
    }
    (out, norms)
}

/// Backward through `y = x / |x|` row-wise, given `y`, `|x|` and `dL/dy`.
fn normalize_rows_backward(y: &Array2<f64>, norms: &Array1<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for ((mut dxr, yr), &n) in dx.rows_mut().into_iter().zip(y.rows()).zip(norms) {
        if n > 0.0 {
            let proj = yr.dot(&dxr);
            dxr.scaled_add(-proj, &yr);
            dxr /= n;
        } else {
            dxr.fill(0.0);
        }
    }
    dx
}

/// Activations of one forward pass through encoder and projector.
#[derive(Debug)]
pub struct ViewTape<'a> {
    adj: &'a NormalizedAdjacency,
    x: &'a Array2<f64>,
    pre_h: Array2<f64>,
    h: Array2<f64>,
    pre_m: Array2<f64>,
    m: Array2<f64>,
    z_norms: Array1<f64>,
    z: Array2<f64>,
}

impl ViewTape<'_> {
    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    /// Smallest |pre-activation| over both ReLU layers.
    pub fn relu_margin(&self) -> f64 {
        self.pre_h
            .iter()
            .chain(self.pre_m.iter())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }
}

/// Encodes one graph view into row-normalized embeddings `Z` (N x d).
pub fn forward<'a>(
    adj: &'a NormalizedAdjacency,
    x: &'a Array2<f64>,
    params: &ModelParams,
) -> Result<(Array2<f64>, ViewTape<'a>)> {
    params.check_consistent()?;
    if x.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, model expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    if adj.n_nodes() != x.nrows() {
        return Err(Error::Shape(format!(
            "adjacency has {} nodes, features {} rows",
            adj.n_nodes(),
            x.nrows()
        )));
    }
    let xw = x.dot(&params.gcn_weight);
    let mut pre_h = adj.matrix().dot_dense(&xw.view());
    add_row(&mut pre_h, &params.gcn_bias);
    let h = relu(&pre_h);
    let mut pre_m = h.dot(&params.proj_weight1);
    add_row(&mut pre_m, &params.proj_bias1);
    let m = relu(&pre_m);
    let mut z_raw = m.dot(&params.proj_weight2);
    add_row(&mut z_raw, &params.proj_bias2);
    let (z, z_norms) = normalize_rows(&z_raw.view());
    let tape = ViewTape {
        adj,
        x,
        pre_h,
        h,
        pre_m,
        m,
        z_norms,
        z: z.clone(),
    };
    Ok((z, tape))
}

/// Cosine similarities `Z rownorm(S)^T` between embeddings and prototypes.
pub fn compute_r(z: &ArrayView2<'_, f64>, prototypes: &ArrayView2<'_, f64>) -> Array2<f64> {
    let (s_hat, _) = normalize_rows(prototypes);
    z.dot(&s_hat.t())
}

/// Row-wise softmax of `r / tau`, stabilized by subtracting each row maximum.
pub fn softmax_p(r: &ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    assert!(tau > 0.0, "temperature must be positive");
    let mut p = r.mapv(|v| v / tau);
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// `-(1 / 2N) sum_n sum_s (Q1 log P2 + Q2 log P1)` with `P` the tempered predictions.
pub fn swapped_loss(
    q1: &ArrayView2<'_, f64>,
    q2: &ArrayView2<'_, f64>,
    p1: &ArrayView2<'_, f64>,
    p2: &ArrayView2<'_, f64>,
) -> f64 {
    let n = q1.nrows() as f64;
    let cross = |q: &ArrayView2<'_, f64>, p: &ArrayView2<'_, f64>| {
        Zip::from(q).and(p).fold(
            0.0,
            |acc, &qv, &pv| {
                if qv == 0.0 {
                    acc
                } else {
                    acc + qv * pv.ln()
                }
            },
        )
    };
    -(cross(q1, p2) + cross(q2, p1)) / (2.0 * n)
}

/// Per-view outputs of a recorded training step.
#[derive(Debug, Clone)]
pub struct ViewOutput {
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    /// Softmax at temperature 1, used for the momentum updates.
    pub p: Array2<f64>,
    /// Softmax at the training temperature, used by the loss.
    pub p_tau: Array2<f64>,
}

/// Everything needed to differentiate the swapped loss of one two-view step.
///
/// `backward` takes the tape by value, so a tape cannot be replayed:
///
/// ```compile_fail
/// # use fgwclust::encoder::GradientTape;
/// # fn replay(tape: GradientTape<'_>, q: &ndarray::Array2<f64>) {
/// let _ = tape.backward(q, q);
/// let _ = tape.backward(q, q);
/// # }
/// ```
#[derive(Debug)]
pub struct GradientTape<'a> {
    params: &'a ModelParams,
    views: [ViewTape<'a>; 2],
    s_hat: Array2<f64>,
    s_norms: Array1<f64>,
    p_tau: [Array2<f64>; 2],
    tau: f64,
}

impl<'a> GradientTape<'a> {
    /// Runs both views forward and records the activations.
    pub fn record(
        params: &'a ModelParams,
        views: [(&'a NormalizedAdjacency, &'a Array2<f64>); 2],
        tau: f64,
    ) -> Result<(Self, [ViewOutput; 2])> {
        if !(tau > 0.0) {
            return Err(Error::Config(format!("tau={tau} must be positive")));
        }
        let (s_hat, s_norms) = normalize_rows(&params.prototypes.view());
        let run = |(adj, x): (&'a NormalizedAdjacency, &'a Array2<f64>)| -> Result<_> {
            let (z, tape) = forward(adj, x, params)?;
            let r = z.dot(&s_hat.t());
            let out = ViewOutput {
                p: softmax_p(&r.view(), 1.0),
                p_tau: softmax_p(&r.view(), tau),
                z,
                r,
            };
            Ok((tape, out))
        };
        let (t1, o1) = run(views[0])?;
        let (t2, o2) = run(views[1])?;
        let tape = Self {
            params,
            views: [t1, t2],
            s_hat,
            s_norms,
            p_tau: [o1.p_tau.clone(), o2.p_tau.clone()],
            tau,
        };
        Ok((tape, [o1, o2]))
    }

    pub fn views(&self) -> &[ViewTape<'a>; 2] {
        &self.views
    }

    /// Gradients of [`swapped_loss`]`(q1, q2, P1^tau, P2^tau)` with respect to every
    /// parameter tensor. The assignments are constants.
    pub fn backward(self, q1: &Array2<f64>, q2: &Array2<f64>) -> ModelParams {
        let p = self.params;
        let mut grads = p.zeros_like();
        let mut d_s_hat = Array2::<f64>::zeros(self.s_hat.raw_dim());
        let n = self.views[0].z.nrows() as f64;
        // view 1 predicts Q2, view 2 predicts Q1
        let targets = [q2, q1];
        for ((view, p_tau), target) in self.views.iter().zip(&self.p_tau).zip(targets) {
            let mut d_r = p_tau.clone();
            for ((mut dr, pr), tr) in d_r
                .rows_mut()
                .into_iter()
                .zip(p_tau.rows())
                .zip(target.rows())
            {
                let mass = tr.sum();
                Zip::from(&mut dr)
                    .and(&pr)
                    .and(&tr)
                    .for_each(|d, &pv, &tv| *d = (pv * mass - tv) / (2.0 * n * self.tau));
            }
            d_s_hat += &d_r.t().dot(&view.z);
            let d_z = d_r.dot(&self.s_hat);
            let d_z_raw = normalize_rows_backward(&view.z, &view.z_norms, &d_z);

            grads.proj_weight2 += &view.m.t().dot(&d_z_raw);
            grads.proj_bias2 += &d_z_raw.sum_axis(Axis(0));
            let mut d_pre_m = d_z_raw.dot(&p.proj_weight2.t());
            Zip::from(&mut d_pre_m).and(&view.pre_m).for_each(|d, &x| {
                if x <= 0.0 {
                    *d = 0.0
                }
            });

            grads.proj_weight1 += &view.h.t().dot(&d_pre_m);
            grads.proj_bias1 += &d_pre_m.sum_axis(Axis(0));
            let mut d_pre_h = d_pre_m.dot(&p.proj_weight1.t());
            Zip::from(&mut d_pre_h).and(&view.pre_h).for_each(|d, &x| {
                if x <= 0.0 {
                    *d = 0.0
                }
            });

            grads.gcn_bias += &d_pre_h.sum_axis(Axis(0));
            // Â is symmetric, so Â^T dPre = Â dPre
            let d_xw = view.adj.matrix().dot_dense(&d_pre_h.view());
            grads.gcn_weight += &view.x.t().dot(&d_xw);
        }
        grads.prototypes = normalize_rows_backward(&self.s_hat, &self.s_norms, &d_s_hat);
        grads
    }
}

/// Adam moments and hyperparameters. Weight decay is an L2 term added to the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
    pub step: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64, weight_decay: f64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
            lr,
            weight_decay,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) {
    state.step += 1;
    let (b1, b2) = state.betas;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, wd, eps) = (state.lr, state.weight_decay, state.eps);
    for (((mut w, g), mut m), mut v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first_moment.tensors_mut())
        .zip(state.second_moment.tensors_mut())
    {
        Zip::from(&mut w)
            .and(&g)
            .and(&mut m)
            .and(&mut v)
            .for_each(|w, &g, m, v| {
                let g = g + wd * *w;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}
