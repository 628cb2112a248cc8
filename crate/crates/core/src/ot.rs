//! Entropic optimal transport kernels.
//!
//! All solvers work in the log domain on scaled dual potentials, so couplings stay
//! representable for small `epsilon`. Gromov-Wasserstein and fused problems use the
//! L1 inner loss between a binary data adjacency and a prototype graph in `[0, 1]`,
//! solved by repeated linearization with an entropic inner solve.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Below this many coupling entries the kernels run on the calling thread.
const PAR_THRESHOLD: usize = 1 << 14;

/// Row (`mu`) and column (`nu`) marginals of a transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    mu: Array1<f64>,
    nu: Array1<f64>,
}

impl Marginals {
    /// Smallest prototype mass handed to the solver.
    pub const NU_FLOOR: f64 = 1e-6;
    const SUM_TOL: f64 = 1e-9;

    /// Validates both vectors, then floors `nu` at [`Self::NU_FLOOR`] and renormalizes it.
    pub fn new(mu: Array1<f64>, nu: Array1<f64>) -> Result<Self> {
        if mu.is_empty() || nu.is_empty() {
            return Err(Error::EmptyMarginal);
        }
        for (name, v) in [("mu", &mu), ("nu", &nu)] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Marginal(format!(
                    "{name} has a negative or non-finite entry"
                )));
            }
            let s = v.sum();
            if (s - 1.0).abs() > Self::SUM_TOL {
                return Err(Error::Marginal(format!("{name} sums to {s}")));
            }
        }
        let mut nu = nu.mapv(|x| x.max(Self::NU_FLOOR));
        let total = nu.sum();
        nu /= total;
        Ok(Self { mu, nu })
    }

    pub fn uniform(n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::EmptyMarginal);
        }
        Self::new(
            Array1::from_elem(n_rows, 1.0 / n_rows as f64),
            Array1::from_elem(n_cols, 1.0 / n_cols as f64),
        )
    }

    /// Uniform `mu` over `n_rows` with the given `nu`.
    pub fn uniform_rows(n_rows: usize, nu: Array1<f64>) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::EmptyMarginal);
        }
        Self::new(Array1::from_elem(n_rows, 1.0 / n_rows as f64), nu)
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn nu(&self) -> &Array1<f64> {
        &self.nu
    }

    /// `mu nu^T`, the maximum-entropy feasible coupling.
    pub fn product(&self) -> Array2<f64> {
        let mu = self.mu.view().insert_axis(Axis(1));
        let nu = self.nu.view().insert_axis(Axis(0));
        &mu * &nu
    }
}

/// Solver settings shared by every kernel in this module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtConfig {
    pub epsilon: f64,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
    pub outer_max_iter: usize,
    pub outer_tol: f64,
    pub alpha: f64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            sinkhorn_max_iter: 1000,
            sinkhorn_tol: 1e-8,
            outer_max_iter: 10,
            outer_tol: 1e-6,
            alpha: 0.5,
        }
    }
}

impl OtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon={} must be positive", self.epsilon));
        }
        if !(self.sinkhorn_tol > 0.0) || !(self.outer_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha={} must lie in [0, 1]", self.alpha));
        }
        if self.sinkhorn_max_iter == 0 || self.outer_max_iter == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        Ok(())
    }
}

/// A transport plan together with how well it satisfies its marginals.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub pi: Array2<f64>,
    pub marginals: Marginals,
    /// `|pi 1 - mu|_inf`
    pub row_residual: f64,
    /// `|pi^T 1 - nu|_inf`
    pub col_residual: f64,
    /// Every inner Sinkhorn solve met `sinkhorn_tol` (and, for GW/FGW, the outer loop met `outer_tol`).
    pub converged: bool,
    pub sinkhorn_iters: usize,
    pub outer_iters: usize,
    /// Objective at each outer iterate, starting from the initial coupling (GW/FGW only).
    pub objective_trace: Vec<f64>,
}

impl Coupling {
    pub fn residual(&self) -> f64 {
        self.row_residual.max(self.col_residual)
    }

    fn finish(pi: Array2<f64>, marginals: &Marginals) -> Self {
        let row_residual = max_abs_diff(&pi.sum_axis(Axis(1)).view(), &marginals.mu.view());
        let col_residual = max_abs_diff(&pi.sum_axis(Axis(0)).view(), &marginals.nu.view());
        Self {
            pi,
            marginals: marginals.clone(),
            row_residual,
            col_residual,
            converged: false,
            sinkhorn_iters: 0,
            outer_iters: 0,
            objective_trace: Vec::new(),
        }
    }
}

fn max_abs_diff(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Row-stochastic node-to-prototype assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub q: Array2<f64>,
}

/// `H(pi) = -sum pi log pi`, with `0 log 0 = 0`.
pub fn entropy(pi: &ArrayView2<'_, f64>) -> f64 {
    -pi.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct LogSinkhorn {
    /// Scaled column potentials `g / epsilon`, reusable as a warm start.
    col_potential: Array1<f64>,
    pi: Array2<f64>,
    iters: usize,
    converged: bool,
}

/// Alternating log-domain projections on `kernel = -cost / epsilon`.
///
/// Each sweep makes the column marginals exact, then measures the row residual of
/// the current plan while computing the row update; the loop stops as soon as that
/// residual drops below `tol`.
fn log_sinkhorn(
    kernel: &Array2<f64>,
    marg: &Marginals,
    max_iter: usize,
    tol: f64,
    warm: Option<&Array1<f64>>,
) -> LogSinkhorn {
    let (n, s) = kernel.dim();
    let parallel = n * s >= PAR_THRESHOLD;
    let log_mu = marg.mu.mapv(f64::ln);
    let log_nu = marg.nu.mapv(f64::ln);
    let kernel_t = kernel.t().as_standard_layout().into_owned();

    let row_lse = |b: &Array1<f64>, i: usize| {
        let row = kernel.row(i);
        log_sum_exp(row.iter().zip(b.iter()).map(|(k, bj)| k + bj))
    };
    let col_lse = |a: &Array1<f64>, j: usize| {
        let col = kernel_t.row(j);
        log_sum_exp(col.iter().zip(a.iter()).map(|(k, ai)| k + ai))
    };
    let rows = |b: &Array1<f64>| -> Vec<f64> {
        if parallel {
            (0..n).into_par_iter().map(|i| row_lse(b, i)).collect()
        } else {
            (0..n).map(|i| row_lse(b, i)).collect()
        }
    };
    let cols = |a: &Array1<f64>| -> Vec<f64> {
        if parallel {
            (0..s).into_par_iter().map(|j| col_lse(a, j)).collect()
        } else {
            (0..s).map(|j| col_lse(a, j)).collect()
        }
    };

    let mut b = warm.cloned().unwrap_or_else(|| Array1::zeros(s));
    let mut a: Array1<f64> = Array1::from_iter(
        rows(&b)
            .into_iter()
            .zip(log_mu.iter())
            .map(|(l, lm)| lm - l),
    );
    let mut iters = 0;
    let mut converged = false;
    while iters < max_iter {
        iters += 1;
        for (bj, (l, ln)) in b.iter_mut().zip(cols(&a).into_iter().zip(log_nu.iter())) {
            *bj = ln - l;
        }
        let lse = rows(&b);
        let mut residual = 0.0f64;
        for i in 0..n {
            residual = residual.max(((a[i] + lse[i]).exp() - marg.mu[i]).abs());
        }
        if residual < tol {
            converged = true;
            break;
        }
        for i in 0..n {
            a[i] = log_mu[i] - lse[i];
        }
    }

    let mut pi = Array2::zeros((n, s));
    Zip::indexed(&mut pi)
        .and(kernel)
        .for_each(|(i, j), p, &k| *p = (a[i] + b[j] + k).exp());
    LogSinkhorn {
        col_potential: b,
        pi,
        iters,
        converged,
    }
}

fn check_cost(cost: &ArrayView2<'_, f64>, marg: &Marginals) -> Result<()> {
    if cost.dim() != (marg.mu.len(), marg.nu.len()) {
        return Err(Error::Shape(format!(
            "cost is {:?} but marginals are {}x{}",
            cost.dim(),
            marg.mu.len(),
            marg.nu.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("transport cost"));
    }
    Ok(())
}

/// Entropic OT: `argmin_{pi in Pi(mu, nu)} <cost, pi> - epsilon H(pi)`.
///
/// Hitting `sinkhorn_max_iter` is not an error; it shows up as `converged == false`
/// and in the recorded residuals.
pub fn sinkhorn(cost: &ArrayView2<'_, f64>, marg: &Marginals, cfg: &OtConfig) -> Result<Coupling> {
    cfg.validate()?;
    check_cost(cost, marg)?;
    let kernel = cost.mapv(|c| -c / cfg.epsilon);
    let solved = log_sinkhorn(&kernel, marg, cfg.sinkhorn_max_iter, cfg.sinkhorn_tol, None);
    let mut out = Coupling::finish(solved.pi, marg);
    out.converged = solved.converged;
    out.sinkhorn_iters = solved.iters;
    Ok(out)
}

fn check_structures(a: &CsrMatrix, b: &ArrayView2<'_, f64>, pi: (usize, usize)) -> Result<()> {
    a.check_binary()?;
    if a.n_rows() != a.n_cols() || b.nrows() != b.ncols() {
        return Err(Error::Shape("structure matrices must be square".into()));
    }
    if (a.n_rows(), b.nrows()) != pi {
        return Err(Error::Shape(format!(
            "structures {}x{} and {}x{} do not match plan {:?}",
            a.n_rows(),
            a.n_cols(),
            b.nrows(),
            b.ncols(),
            pi
        )));
    }
    if let Some(&v) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::PrototypeGraphRange(v));
    }
    Ok(())
}

/// `G[i, j] = sum_{k, l} |A[i, k] - B[j, l]| pi[k, l]` for binary `A` and `B` in `[0, 1]`.
///
/// Uses `|a - b| = a + b - 2ab`, giving `G = (A r) 1^T + 1 (B c)^T - 2 A pi B^T` with
/// `r = pi 1` and `c = pi^T 1`; cost is `O(nnz(A) S + N S^2)`.
pub fn gw_linearized_cost(
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    pi: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_structures(a, b, pi.dim())?;
    Ok(gw_cost_unchecked(a, b, pi))
}

fn gw_cost_unchecked(
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    pi: &ArrayView2<'_, f64>,
) -> Array2<f64> {
    let r = pi.sum_axis(Axis(1));
    let c = pi.sum_axis(Axis(0));
    let ar = a.dot_vec(r.as_slice().expect("fresh array is contiguous"));
    let bc = b.dot(&c);
    let mut g = a.dot_dense(pi).dot(&b.t());
    Zip::indexed(&mut g).for_each(|(i, j), v| *v = ar[i] + bc[j] - 2.0 * *v);
    g
}

/// `sum_{i,j,k,l} |A[i,k] - B[j,l]| pi[i,j] pi[k,l]`.
pub fn gw_objective(
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    pi: &ArrayView2<'_, f64>,
) -> Result<f64> {
    Ok((gw_linearized_cost(a, b, pi)? * pi).sum())
}

/// `(1 - alpha) <attr, pi> + alpha * GW(pi)`, the un-regularized fused objective at `p = 1`.
pub fn fgw_objective(
    attr_cost: &ArrayView2<'_, f64>,
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    pi: &ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<f64> {
    let linear = (attr_cost * pi).sum();
    Ok((1.0 - alpha) * linear + alpha * gw_objective(a, b, pi)?)
}

/// Iterated linearization shared by [`entropic_gw`] and [`entropic_fgw`].
fn linearized_solve(
    attr_cost: Option<&ArrayView2<'_, f64>>,
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    marg: &Marginals,
    cfg: &OtConfig,
    alpha: f64,
) -> Result<Coupling> {
    cfg.validate()?;
    let shape = (marg.mu.len(), marg.nu.len());
    check_structures(a, b, shape)?;
    if let Some(m) = attr_cost {
        check_cost(m, marg)?;
    }
    let linear_weight = 1.0 - alpha;
    let gw_weight = 2.0 * alpha;
    let objective = |pi: &Array2<f64>, g: &Array2<f64>| {
        let gw = (g * pi).sum();
        match attr_cost {
            Some(m) => linear_weight * (m * pi).sum() + alpha * gw,
            None => gw,
        }
    };

    let mut pi = marg.product();
    let mut warm: Option<Array1<f64>> = None;
    let mut prev_kernel: Option<Array2<f64>> = None;
    let mut trace = Vec::new();
    let mut inner_iters = 0;
    let mut inner_converged = true;
    let mut outer_converged = false;
    let mut outer_iters = 0;

    for _ in 0..cfg.outer_max_iter {
        let g = gw_cost_unchecked(a, b, &pi.view());
        trace.push(objective(&pi, &g));
        let mut kernel = match attr_cost {
            Some(m) => {
                let mut l = m.to_owned();
                Zip::from(&mut l)
                    .and(&g)
                    .for_each(|l, &gv| *l = linear_weight * *l + gw_weight * gv);
                l
            }
            None => g.mapv(|gv| linear_weight * 0.0 + gw_weight * gv),
        };
        kernel.mapv_inplace(|c| -c / cfg.epsilon);
        if prev_kernel.as_ref() == Some(&kernel) {
            // Same linearization as the last solve: the plan is a fixed point.
            outer_converged = true;
            break;
        }
        let solved = log_sinkhorn(
            &kernel,
            marg,
            cfg.sinkhorn_max_iter,
            cfg.sinkhorn_tol,
            warm.as_ref(),
        );
        outer_iters += 1;
        inner_iters += solved.iters;
        inner_converged &= solved.converged;
        let change = Zip::from(&solved.pi)
            .and(&pi)
            .fold(0.0f64, |acc, &x, &y| acc.max((x - y).abs()));
        pi = solved.pi;
        warm = Some(solved.col_potential);
        prev_kernel = Some(kernel);
        if change < cfg.outer_tol {
            outer_converged = true;
            break;
        }
    }
    let g = gw_cost_unchecked(a, b, &pi.view());
    trace.push(objective(&pi, &g));

    let mut out = Coupling::finish(pi, marg);
    out.converged = inner_converged && outer_converged;
    out.sinkhorn_iters = inner_iters;
    out.outer_iters = outer_iters;
    out.objective_trace = trace;
    if !out.pi.iter().all(|p| p.is_finite()) {
        return Err(Error::NonFinite("coupling"));
    }
    Ok(out)
}

/// Entropic GW between the binary graph `a` and the prototype graph `b`.
///
/// Starts from `mu nu^T` and repeats `pi <- sinkhorn(2 G(pi))` until the plan moves less
/// than `outer_tol` (max-norm) or `outer_max_iter` solves have run.
pub fn entropic_gw(
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    marg: &Marginals,
    cfg: &OtConfig,
) -> Result<Coupling> {
    linearized_solve(None, a, b, marg, cfg, 1.0)
}

/// Entropic fused GW with trade-off `cfg.alpha`: each linearization solves
/// `sinkhorn((1 - alpha) attr_cost + 2 alpha G(pi))`.
///
/// `alpha = 0` reproduces [`sinkhorn`] on `attr_cost` exactly and `alpha = 1`
/// reproduces [`entropic_gw`].
pub fn entropic_fgw(
    attr_cost: &ArrayView2<'_, f64>,
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    marg: &Marginals,
    cfg: &OtConfig,
) -> Result<Coupling> {
    linearized_solve(Some(attr_cost), a, b, marg, cfg, cfg.alpha)
}

/// Row-normalizes a coupling into an assignment.
pub fn coupling_to_assignment(pi: &Coupling) -> Result<Assignment> {
    let mut q = pi.pi.clone();
    for (row, mut r) in q.rows_mut().into_iter().enumerate() {
        let s = r.sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::DegenerateCoupling { row });
        }
        r /= s;
    }
    Ok(Assignment { q })
}
