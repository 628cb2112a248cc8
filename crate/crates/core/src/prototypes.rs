//! Momentum state on the prototype side: the prototype graph `B` and the prototype
//! marginal `nu`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeState {
    pub b: Array2<f64>,
    pub nu: Array1<f64>,
    pub beta1: f64,
    pub beta2: f64,
}

/// Per-view outputs of [`step_views`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPrototypes {
    pub b: Array2<f64>,
    pub nu: Array1<f64>,
}

/// `B = I_S`, uniform `nu`.
pub fn init_state(s: usize, beta1: f64, beta2: f64) -> Result<PrototypeState> {
    if s < 2 {
        return Err(Error::Config(format!(
            "need at least 2 prototypes, got {s}"
        )));
    }
    for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("{name}={beta} outside [0, 1]")));
        }
    }
    Ok(PrototypeState {
        b: Array2::eye(s),
        nu: Array1::from_elem(s, 1.0 / s as f64),
        beta1,
        beta2,
    })
}

/// `beta1 * B + (1 - beta1) * PᵀP / max(PᵀP)`.
pub fn update_b(state: &PrototypeState, p: &ArrayView2<'_, f64>) -> Array2<f64> {
    let beta = state.beta1;
    if beta == 1.0 {
        return state.b.clone();
    }
    let ptp = p.t().dot(p);
    let max = ptp.fold(0.0f64, |m, &v| m.max(v));
    let mut b = state.b.mapv(|v| beta * v);
    if max > 0.0 {
        b.scaled_add((1.0 - beta) / max, &ptp);
    }
    // PᵀP is symmetric only up to rounding in the two triangle reductions.
    (&b + &b.t()) * 0.5
}

/// `beta2 * nu + (1 - beta2) * Pᵀ1 / N`, renormalized to sum to one.
pub fn update_nu(state: &PrototypeState, p: &ArrayView2<'_, f64>) -> Array1<f64> {
    let beta = state.beta2;
    if beta == 1.0 {
        return state.nu.clone();
    }
    let mass = p.sum_axis(Axis(0)) / p.nrows() as f64;
    let nu = &state.nu * beta + &(mass * (1.0 - beta));
    let total = nu.sum();
    nu / total
}

/// One epoch of momentum for both views, in order: view 2 blends against the state
/// already updated by view 1.
pub fn step_views(
    state: &mut PrototypeState,
    p1: &ArrayView2<'_, f64>,
    p2: &ArrayView2<'_, f64>,
) -> [ViewPrototypes; 2] {
    let mut step = |p: &ArrayView2<'_, f64>| {
        let b = update_b(state, p);
        let nu = update_nu(state, p);
        state.b = b.clone();
        state.nu = nu.clone();
        ViewPrototypes { b, nu }
    };
    let first = step(p1);
    let second = step(p2);
    [first, second]
}
