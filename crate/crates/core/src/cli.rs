//! Command-line front end: argument parsing, config overrides, run artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error (missing or malformed
//! files, shape mismatches), 3 numerical failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::Error;
use crate::fgm;
use crate::graph::{convert_linqs, generate_sbm, load_graph, write_dir, DataFiles, SbmSpec};
use crate::kmeans::{kmeans, ClusterLabels, KMeansConfig};
use crate::metrics::evaluate;
use crate::training::{infer, train_with, TrainConfig};

pub const CHECKPOINT: &str = "checkpoint.fgm";
pub const LOSS: &str = "loss.csv";
pub const METRICS: &str = "metrics.json";
pub const CONFUSION: &str = "confusion.tsv";
pub const HISTOGRAMS: &str = "histograms.tsv";
pub const EMBEDDINGS: &str = "embeddings.fgm";
pub const CLUSTERS: &str = "clusters.txt";
pub const MANIFEST: &str = "manifest.json";
pub const THREADS_ENV: &str = "FGW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "fgwclust",
    version,
    about = "Prototype-based graph node clustering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Embed a dataset with a trained model, cluster it and score the clusters.
    Eval(EvalArgs),
    /// Generate a stochastic block model dataset.
    Synth(SynthArgs),
    /// Convert a LINQS citation export (.content + .cites) to a dataset directory.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a config field, e.g. `--set ot.epsilon=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// K-means seed; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cluster count; defaults to the number of classes in `labels.txt`.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub n_init: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON block-model spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub cites: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Run(Error::Config(_)) => 1,
            CliError::Run(
                Error::NonFinite(_)
                | Error::Training { .. }
                | Error::DegenerateCoupling { .. }
                | Error::Marginal(_)
                | Error::PrototypeGraphRange(_),
            ) => 3,
            CliError::Run(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reproduction record written next to every train/eval output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the canonical (key-sorted, compact) JSON of `config`.
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub dataset_id: String,
    pub started_at: String,
    pub finished_at: String,
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

/// Compact JSON with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map type is a BTreeMap, so objects serialize key-sorted.
    v.to_string()
}

pub fn config_hash(v: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(v).as_bytes()))
}

/// Directory name plus a digest of the data files' contents.
pub fn dataset_id(dir: &Path, files: &DataFiles) -> CliResult<String> {
    let mut h = Sha256::new();
    let paths = [
        Some(&files.edges),
        Some(&files.features),
        files.labels.as_ref(),
    ];
    for p in paths.into_iter().flatten() {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update(
            p.file_name()
                .map(|n| n.as_encoded_bytes())
                .unwrap_or_default(),
        );
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    let name = dir
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string());
    Ok(format!("{name}@{}", &hex::encode(h.finalize())[..16]))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Applies `key.path=value` to a JSON object. Values parse as JSON when possible and
/// fall back to strings.
pub fn apply_override(root: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("empty path segment in {key:?}")));
        }
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("{key:?}: {part:?} is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one segment")
}

/// Reads the config file (or defaults), applies overrides and the seed flag.
pub fn resolve_config(
    path: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
) -> CliResult<TrainConfig> {
    let mut v = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    if let Some(s) = seed {
        apply_override(&mut v, &format!("seed={s}"))?;
    }
    let cfg: TrainConfig =
        serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e).into())
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write(&out.join(MANIFEST), text + "\n")
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<RunManifest> {
    let started_at = now();
    let cfg = resolve_config(args.config.as_deref(), &args.overrides, args.seed)?;
    let files = DataFiles::locate(&args.data)?;
    let g = load_graph(&files.edges, &files.features, files.labels.as_deref())?;
    let dataset_id = dataset_id(&args.data, &files)?;
    log::info!(
        "training on {dataset_id}: {} nodes, {} edges, {} features",
        g.n_nodes(),
        g.n_edges(),
        g.n_features()
    );
    let model = train_with(&g, &cfg, |epoch, loss| {
        if epoch % 10 == 0 {
            log::info!("epoch {epoch}: loss {loss:.6}");
        }
    })?;

    create_out(&args.out)?;
    save_checkpoint(args.out.join(CHECKPOINT), &model)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in model.loss_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write(&args.out.join(LOSS), csv)?;

    let config = serde_json::to_value(&cfg).expect("config serializes");
    let mut metrics = BTreeMap::new();
    if let Some(&last) = model.loss_trace.last() {
        metrics.insert("final_loss".to_owned(), last);
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: "train".into(),
        config_hash: config_hash(&config),
        config,
        seed: cfg.seed,
        dataset_id,
        started_at,
        finished_at: now(),
        metrics,
        outputs: vec![CHECKPOINT.into(), LOSS.into(), MANIFEST.into()],
    };
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

/// Settings of an evaluation, hashed into its manifest.
#[derive(Debug, Serialize)]
struct EvalSettings<'a> {
    checkpoint_sha256: String,
    train_config: &'a TrainConfig,
    clusters: Option<usize>,
    kmeans: KMeansConfig,
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<RunManifest> {
    let started_at = now();
    let ckpt_bytes = fs::read(&args.checkpoint).map_err(|e| Error::io(&args.checkpoint, e))?;
    let model = load_checkpoint(&args.checkpoint)?;
    let files = DataFiles::locate(&args.data)?;
    let g = load_graph(&files.edges, &files.features, files.labels.as_deref())?;
    let dataset_id = dataset_id(&args.data, &files)?;
    if g.n_features() != model.params.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, checkpoint expects {}",
            g.n_features(),
            model.params.input_dim()
        ))
        .into());
    }
    let r = infer(&g, &model)?;

    create_out(&args.out)?;
    fgm::save(args.out.join(EMBEDDINGS), &r.view())?;
    let mut outputs = vec![EMBEDDINGS.to_owned()];
    let kcfg = KMeansConfig {
        n_init: args.n_init,
        max_iter: args.max_iter,
        seed: args.seed.unwrap_or(model.config.seed),
    };
    let k = args.clusters.or(g.n_classes());
    let mut metrics = BTreeMap::new();
    if let Some(k) = k {
        let fit = kmeans(&r.view(), k, &kcfg)?;
        let lines: String = fit
            .labels
            .labels()
            .iter()
            .map(|l| format!("{l}\n"))
            .collect();
        write(&args.out.join(CLUSTERS), lines)?;
        outputs.push(CLUSTERS.into());
        metrics.insert("inertia".to_owned(), fit.inertia);
        if let (Some(labels), Some(c)) = (g.labels(), g.n_classes()) {
            if c == k {
                let truth = ClusterLabels::new(labels.to_vec(), c)?;
                let report = evaluate(&fit.labels, &truth)?;
                log::info!("{report}");
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                write(&args.out.join(METRICS), json + "\n")?;
                write(&args.out.join(CONFUSION), report.confusion_tsv())?;
                write(&args.out.join(HISTOGRAMS), report.histograms_tsv())?;
                outputs.extend([METRICS.into(), CONFUSION.into(), HISTOGRAMS.into()]);
                for (name, v) in [
                    ("acc", report.acc),
                    ("nmi", report.nmi),
                    ("ari", report.ari),
                    ("macro_f1", report.macro_f1),
                ] {
                    metrics.insert(name.to_owned(), v);
                }
            } else {
                log::warn!("{k} clusters for {c} classes; skipping label metrics");
            }
        }
    } else {
        log::warn!("no labels and no --clusters; writing embeddings only");
    }
    outputs.push(MANIFEST.into());

    let settings = EvalSettings {
        checkpoint_sha256: hex::encode(Sha256::digest(&ckpt_bytes)),
        train_config: &model.config,
        clusters: k,
        kmeans: kcfg,
    };
    let config = serde_json::to_value(&settings).expect("settings serialize");
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: "eval".into(),
        config_hash: config_hash(&config),
        config,
        seed: kcfg.seed,
        dataset_id,
        started_at,
        finished_at: now(),
        metrics,
        outputs,
    };
    write_manifest(&args.out, &manifest)?;
    Ok(manifest)
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.spec.display())))?;
    let mut spec: SbmSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.spec.display())))?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let g = generate_sbm(&spec)?;
    Ok(write_dir(&args.out, &g)?)
}

pub fn cmd_convert(args: &ConvertArgs) -> CliResult<Vec<PathBuf>> {
    let ds = convert_linqs(&args.content, &args.cites)?;
    if ds.dangling_edges > 0 {
        log::warn!("skipped {} citations to unknown papers", ds.dangling_edges);
    }
    let mut written = write_dir(&args.out, &ds.graph)?;
    for (name, lines) in [
        ("classes.txt", &ds.class_names),
        ("node_ids.txt", &ds.node_ids),
    ] {
        let p = args.out.join(name);
        write(
            &p,
            lines.iter().map(|l| format!("{l}\n")).collect::<String>(),
        )?;
        written.push(p);
    }
    Ok(written)
}

/// Sizes the global thread pool from `FGW_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Train(a) => {
            let m = cmd_train(a)?;
            println!(
                "wrote {} (config {})",
                a.out.display(),
                &m.config_hash[..12]
            );
        }
        Command::Eval(a) => {
            let m = cmd_eval(a)?;
            let summary: Vec<String> = m
                .metrics
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect();
            println!("wrote {} {}", a.out.display(), summary.join(" "));
        }
        Command::Synth(a) => {
            for p in cmd_synth(a)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Convert(a) => {
            for p in cmd_convert(a)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

pub fn main_with(cli: &Cli) -> ExitCode {
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
