//! C ABI over `fgwclust`.
//!
//! Every fallible call returns an [`FgwStatus`]; on failure the message is available
//! from [`fgw_last_error`] on the same thread until the next failing call. Graphs and
//! models are opaque handles released with their `_free` function. Matrices are dense,
//! row-major `double` buffers whose sizes are given by the accompanying counts.
//!
//! Pointer contract shared by all functions: input buffers must be readable for the
//! stated length, output buffers writable for it, strings NUL-terminated UTF-8, and
//! handles either null or obtained from this library and not yet freed.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fgwclust::graph::{load_dir, AttributeGraph};
use fgwclust::kmeans::{kmeans, ClusterLabels, KMeansConfig};
use fgwclust::metrics::evaluate;
use fgwclust::ot::{entropic_fgw, sinkhorn, Marginals, OtConfig};
use fgwclust::training::{infer, train, TrainConfig, TrainedModel};
use fgwclust::{checkpoint, Error};
use ndarray::{Array1, ArrayView2};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Config = 6,
    Numerical = 7,
    Panic = 8,
}

/// Clustering scores, all in `[0, 1]` except ARI, which is at least -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FgwMetrics {
    pub acc: f64,
    pub macro_f1: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Attributed graph handle.
pub struct FgwGraph(AttributeGraph);

/// Trained model handle.
pub struct FgwModel(TrainedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FgwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => FgwStatus::Io,
            Error::Parse { .. } | Error::NodeOutOfRange { .. } | Error::Format { .. } => {
                FgwStatus::Format
            }
            Error::RowMismatch { .. }
            | Error::Shape(_)
            | Error::TooManyClusters { .. }
            | Error::LabelOutOfRange { .. } => FgwStatus::Shape,
            Error::Config(_) => FgwStatus::Config,
            Error::NonFinite(_) | Error::DegenerateCoupling { .. } | Error::Training { .. } => {
                FgwStatus::Numerical
            }
            _ => FgwStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FgwStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "\\0")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FgwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FgwStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FgwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| invalid(format!("{what} is not UTF-8: {e}")))
}

fn area(rows: usize, cols: usize) -> FfiResult<usize> {
    rows.checked_mul(cols)
        .ok_or_else(|| invalid(format!("{rows} x {cols} overflows")))
}

unsafe fn matrix<'a>(
    p: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> FfiResult<ArrayView2<'a, f64>> {
    let data = input(p, area(rows, cols)?, what)?;
    Ok(ArrayView2::from_shape((rows, cols), data).expect("length checked"))
}

fn to_usize(v: &[u64]) -> FfiResult<Vec<usize>> {
    v.iter()
        .map(|&x| {
            usize::try_from(x).map_err(|_| invalid(format!("index {x} exceeds the address space")))
        })
        .collect()
}

/// Null `mu`/`nu` select uniform marginals.
unsafe fn marginals(mu: *const f64, nu: *const f64, n: usize, s: usize) -> FfiResult<Marginals> {
    let side = |p: *const f64, len: usize| -> FfiResult<Array1<f64>> {
        Ok(if p.is_null() {
            Array1::from_elem(len, 1.0 / len.max(1) as f64)
        } else {
            Array1::from(input(p, len, "marginal")?.to_vec())
        })
    };
    Ok(Marginals::new(side(mu, n)?, side(nu, s)?)?)
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fgw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null.
#[no_mangle]
pub extern "C" fn fgw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads `edges.txt`, `features.fgm` or `features.csv`, and optional `labels.txt` from `dir`.
#[no_mangle]
pub unsafe extern "C" fn fgw_graph_load(dir: *const c_char, out: *mut *mut FgwGraph) -> FgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = load_dir(string(dir, "dir")?)?;
        put(out, FgwGraph(g));
        Ok(())
    })
}

/// Builds a graph from `n_nodes x n_features` features and `n_edges` undirected
/// `(u, v)` pairs stored flat in `edges`. `labels` may be null.
#[no_mangle]
pub unsafe extern "C" fn fgw_graph_new(
    features: *const f64,
    n_nodes: usize,
    n_features: usize,
    edges: *const u64,
    n_edges: usize,
    labels: *const u64,
    out: *mut *mut FgwGraph,
) -> FgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix(features, n_nodes, n_features, "features")?.to_owned();
        let flat = to_usize(input(edges, area(n_edges, 2)?, "edges")?)?;
        let labels = if labels.is_null() {
            None
        } else {
            Some(to_usize(input(labels, n_nodes, "labels")?)?)
        };
        let (g, _) =
            AttributeGraph::from_edges(x, flat.chunks_exact(2).map(|e| (e[0], e[1])), labels)?;
        put(out, FgwGraph(g));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fgw_graph_n_nodes(g: *const FgwGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_nodes())
}

#[no_mangle]
pub unsafe extern "C" fn fgw_graph_n_features(g: *const FgwGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_features())
}

/// Number of undirected edges.
#[no_mangle]
pub unsafe extern "C" fn fgw_graph_n_edges(g: *const FgwGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.n_edges())
}

#[no_mangle]
pub unsafe extern "C" fn fgw_graph_free(g: *mut FgwGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Entropic OT between `n` rows and `s` columns under `cost`; writes the `n x s` plan.
#[no_mangle]
pub unsafe extern "C" fn fgw_sinkhorn(
    cost: *const f64,
    n: usize,
    s: usize,
    mu: *const f64,
    nu: *const f64,
    epsilon: f64,
    out_plan: *mut f64,
) -> FgwStatus {
    guard(|| {
        let c = matrix(cost, n, s, "cost")?;
        let out = output(out_plan, area(n, s)?, "out_plan")?;
        let cfg = OtConfig {
            epsilon,
            ..OtConfig::default()
        };
        cfg.validate()?;
        let pi = sinkhorn(&c, &marginals(mu, nu, n, s)?, &cfg)?;
        out.copy_from_slice(pi.pi.as_slice().expect("standard layout"));
        Ok(())
    })
}

/// Entropic fused GW between the graph's adjacency (with `cost` over its nodes) and
/// an `s x s` structure `b` with entries in `[0, 1]`; writes the `n x s` plan.
#[no_mangle]
pub unsafe extern "C" fn fgw_fused_gw(
    cost: *const f64,
    graph: *const FgwGraph,
    b: *const f64,
    s: usize,
    mu: *const f64,
    nu: *const f64,
    alpha: f64,
    epsilon: f64,
    out_plan: *mut f64,
) -> FgwStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.0;
        let n = g.n_nodes();
        let c = matrix(cost, n, s, "cost")?;
        let b = matrix(b, s, s, "b")?;
        let out = output(out_plan, area(n, s)?, "out_plan")?;
        let cfg = OtConfig {
            epsilon,
            alpha,
            ..OtConfig::default()
        };
        cfg.validate()?;
        let pi = entropic_fgw(&c, g.adjacency(), &b, &marginals(mu, nu, n, s)?, &cfg)?;
        out.copy_from_slice(pi.pi.as_slice().expect("standard layout"));
        Ok(())
    })
}

/// Trains on `graph`. `config_json` is a JSON training config; null or `"{}"` uses
/// the defaults.
#[no_mangle]
pub unsafe extern "C" fn fgw_train(
    graph: *const FgwGraph,
    config_json: *const c_char,
    out: *mut *mut FgwModel,
) -> FgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = &handle(graph, "graph")?.0;
        let cfg: TrainConfig = if config_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?)
                .map_err(|e| Failure(FgwStatus::Config, format!("config: {e}")))?
        };
        put(out, FgwModel(train(g, &cfg)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fgw_model_n_prototypes(m: *const FgwModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.params.n_prototypes())
}

/// Input feature width the model expects.
#[no_mangle]
pub unsafe extern "C" fn fgw_model_input_dim(m: *const FgwModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.params.input_dim())
}

/// Number of recorded epochs, the length `fgw_model_loss_trace` writes.
#[no_mangle]
pub unsafe extern "C" fn fgw_model_n_epochs(m: *const FgwModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.loss_trace.len())
}

#[no_mangle]
pub unsafe extern "C" fn fgw_model_loss_trace(m: *const FgwModel, out: *mut f64) -> FgwStatus {
    guard(|| {
        let trace = &handle(m, "model")?.0.loss_trace;
        output(out, trace.len(), "out")?.copy_from_slice(trace);
        Ok(())
    })
}

/// Writes the `n_nodes x n_prototypes` prototype similarities of every node.
#[no_mangle]
pub unsafe extern "C" fn fgw_model_infer(
    m: *const FgwModel,
    graph: *const FgwGraph,
    out: *mut f64,
) -> FgwStatus {
    guard(|| {
        let model = &handle(m, "model")?.0;
        let g = &handle(graph, "graph")?.0;
        if g.n_features() != model.params.input_dim() {
            return Err(Error::Shape(format!(
                "graph has {} features, model expects {}",
                g.n_features(),
                model.params.input_dim()
            ))
            .into());
        }
        let r = infer(g, model)?;
        output(out, r.len(), "out")?.copy_from_slice(r.as_slice().expect("standard layout"));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fgw_model_save(m: *const FgwModel, path: *const c_char) -> FgwStatus {
    guard(|| {
        let model = &handle(m, "model")?.0;
        checkpoint::save_checkpoint(string(path, "path")?, model)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fgw_model_load(path: *const c_char, out: *mut *mut FgwModel) -> FgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = checkpoint::load_checkpoint(string(path, "path")?)?;
        put(out, FgwModel(model));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fgw_model_free(m: *mut FgwModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// K-means with k-means++ seeding over the `n x d` rows of `x`; writes `n` labels in
/// `[0, k)` from the lowest-inertia of `n_init` restarts.
#[no_mangle]
pub unsafe extern "C" fn fgw_kmeans(
    x: *const f64,
    n: usize,
    d: usize,
    k: usize,
    n_init: usize,
    seed: u64,
    out_labels: *mut u64,
    out_inertia: *mut f64,
) -> FgwStatus {
    guard(|| {
        let x = matrix(x, n, d, "x")?;
        let labels = output(out_labels, n, "out_labels")?;
        let cfg = KMeansConfig {
            n_init,
            seed,
            ..KMeansConfig::default()
        };
        let fit = kmeans(&x, k, &cfg)?;
        for (o, &l) in labels.iter_mut().zip(fit.labels.labels()) {
            *o = l as u64;
        }
        if !out_inertia.is_null() {
            *out_inertia = fit.inertia;
        }
        Ok(())
    })
}

/// Scores `n` predicted cluster ids in `[0, n_clusters)` against class ids in
/// `[0, n_classes)`. Accuracy and macro-F1 use the optimal one-to-one matching.
#[no_mangle]
pub unsafe extern "C" fn fgw_evaluate(
    pred: *const u64,
    truth: *const u64,
    n: usize,
    n_clusters: usize,
    n_classes: usize,
    out: *mut FgwMetrics,
) -> FgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pred = ClusterLabels::new(to_usize(input(pred, n, "pred")?)?, n_clusters)?;
        let truth = ClusterLabels::new(to_usize(input(truth, n, "truth")?)?, n_classes)?;
        let r = evaluate(&pred, &truth)?;
        *out = FgwMetrics {
            acc: r.acc,
            macro_f1: r.macro_f1,
            nmi: r.nmi,
            ari: r.ari,
        };
        Ok(())
    })
}
