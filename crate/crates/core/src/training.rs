//! The training loop: two augmented views per epoch, prototype momentum, fused GW
//! assignments, swapped prediction and one Adam step.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    adam_step, compute_r, forward, swapped_loss, Dims, GradientTape, ModelParams, OptimizerState,
};
use crate::error::{Error, Result};
use crate::graph::{augment, gcn_normalize, AttributeGraph, AugmentationConfig};
use crate::ot::{coupling_to_assignment, entropic_fgw, Marginals, OtConfig};
use crate::prototypes::{init_state, step_views, PrototypeState};
use crate::sparse::CsrMatrix;

/// Ablation switches. Each one replaces an input of the fused GW solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Prototype graph pinned to the identity.
    #[serde(rename = "no_B")]
    pub no_b: bool,
    /// Node adjacency replaced by the identity.
    #[serde(rename = "no_A")]
    pub no_a: bool,
    /// Momentum coefficients forced to 1, freezing `B` and `nu` at their initial values.
    pub fixed_momentum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "S")]
    pub n_prototypes: usize,
    pub alpha: f64,
    pub tau: f64,
    pub pe: f64,
    pub px: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Solver settings; `ot.alpha` is overridden by `alpha`.
    pub ot: OtConfig,
    pub seed: u64,
    pub ablation: Ablation,
    pub dims: Dims,
}

impl Default for TrainConfig {
    /// The Cora setting.
    fn default() -> Self {
        Self {
            n_prototypes: 18,
            alpha: 0.70,
            tau: 0.60,
            pe: 0.4,
            px: 0.4,
            epochs: 200,
            lr: 5e-4,
            weight_decay: 5e-5,
            beta1: 0.99,
            beta2: 0.999,
            ot: OtConfig::default(),
            seed: 0,
            ablation: Ablation::default(),
            dims: Dims::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_prototypes < 2 {
            return bad(format!("S={} must be at least 2", self.n_prototypes));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha={} must lie in [0, 1]", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau={} must be positive", self.tau));
        }
        AugmentationConfig::new(self.pe, self.px, self.seed)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr={} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay={} must be non-negative",
                self.weight_decay
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("{name}={b} must lie in [0, 1]"));
            }
        }
        let d = self.dims;
        if d.d1 == 0 || d.d_h == 0 || d.d == 0 {
            return bad("layer widths must be positive".into());
        }
        self.solver().validate()
    }

    /// Solver settings with the fused trade-off applied.
    pub fn solver(&self) -> OtConfig {
        OtConfig {
            alpha: self.alpha,
            ..self.ot
        }
    }

    /// Momentum coefficients after the `fixed_momentum` ablation.
    pub fn momentum(&self) -> (f64, f64) {
        if self.ablation.fixed_momentum {
            (1.0, 1.0)
        } else {
            (self.beta1, self.beta2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub proto_state: PrototypeState,
    pub config: TrainConfig,
    pub loss_trace: Vec<f64>,
}

/// Trains on `g` for `cfg.epochs` epochs. The run is a pure function of `g` and `cfg`.
pub fn train(g: &AttributeGraph, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with(g, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, loss)` after every optimizer step.
pub fn train_with(
    g: &AttributeGraph,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let s = cfg.n_prototypes;
    let n = g.n_nodes();
    if n == 0 {
        return Err(Error::Shape("graph has no nodes".into()));
    }
    if let Some(c) = g.n_classes() {
        if s < c {
            log::warn!("S={s} prototypes for {c} classes; expected S >= C");
        }
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(g.n_features(), cfg.dims, s, &mut init_rng);
    let aug = AugmentationConfig::new(cfg.pe, cfg.px, cfg.seed)?;
    let mut aug_rng = aug.rng();
    aug_rng.set_stream(1);

    let (beta1, beta2) = cfg.momentum();
    let mut proto = init_state(s, beta1, beta2)?;
    let mut opt = OptimizerState::new(&params, cfg.lr, cfg.weight_decay);
    let solver = cfg.solver();
    let identity_b = Array2::<f64>::eye(s);
    let identity_a = CsrMatrix::identity(n);
    let mu = Array1::from_elem(n, 1.0 / n as f64);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let fail = |msg: String| Error::Training { epoch, msg };
        let views = [
            augment(g, &aug, &mut aug_rng),
            augment(g, &aug, &mut aug_rng),
        ];
        let adj = [gcn_normalize(&views[0]), gcn_normalize(&views[1])];
        let (tape, out) = GradientTape::record(
            &params,
            [
                (&adj[0], views[0].features()),
                (&adj[1], views[1].features()),
            ],
            cfg.tau,
        )?;
        let blended = step_views(&mut proto, &out[0].p.view(), &out[1].p.view());

        let mut q = Vec::with_capacity(2);
        for v in 0..2 {
            let b = if cfg.ablation.no_b {
                &identity_b
            } else {
                &blended[v].b
            };
            let a = if cfg.ablation.no_a {
                &identity_a
            } else {
                views[v].adjacency()
            };
            let cost = out[v].r.mapv(|r| -r);
            let marg = Marginals::new(mu.clone(), blended[v].nu.clone())?;
            q.push(
                view_assignment(&cost.view(), a, &b.view(), &marg, &solver)
                    .map_err(|e| fail(format!("view {}: {e}", v + 1)))?,
            );
        }

        let loss = swapped_loss(
            &q[0].view(),
            &q[1].view(),
            &out[0].p_tau.view(),
            &out[1].p_tau.view(),
        );
        if !loss.is_finite() {
            return Err(fail(format!(
                "non-finite loss {loss} (min P^tau {:.3e})",
                out.iter()
                    .flat_map(|o| o.p_tau.iter().copied())
                    .fold(f64::INFINITY, f64::min)
            )));
        }
        let grads = tape.backward(&q[0], &q[1]);
        if !grads.is_finite() {
            return Err(fail("non-finite gradient".into()));
        }
        adam_step(&mut params, &grads, &mut opt);
        trace.push(loss);
        log::debug!("epoch {epoch}: loss {loss:.6}");
        on_epoch(epoch, loss);
    }

    Ok(TrainedModel {
        params,
        proto_state: proto,
        config: cfg.clone(),
        loss_trace: trace,
    })
}

/// Soft assignment of one view: the row-normalized fused GW coupling between the node
/// graph `a` with attribute cost `cost` and the prototype graph `b`.
pub fn view_assignment(
    cost: &ArrayView2<'_, f64>,
    a: &CsrMatrix,
    b: &ArrayView2<'_, f64>,
    marg: &Marginals,
    solver: &OtConfig,
) -> Result<Array2<f64>> {
    let pi = entropic_fgw(cost, a, b, marg, solver)?;
    if !pi.converged {
        log::debug!("solver stopped at marginal residual {:.3e}", pi.residual());
    }
    Ok(coupling_to_assignment(&pi)?.q)
}

/// Prototype similarities `R` of every node of the original graph.
pub fn infer(g: &AttributeGraph, model: &TrainedModel) -> Result<Array2<f64>> {
    let adj = gcn_normalize(g);
    let (z, _) = forward(&adj, g.features(), &model.params)?;
    Ok(compute_r(&z.view(), &model.params.prototypes.view()))
}
