use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fgwclust::cli::{config_hash, RunManifest};
use fgwclust::graph::{load_dir, write_dir};
use serde_json::json;

const SPEC: &str = r#"{
  "n_per_block": [20, 20],
  "p_in": 0.3,
  "p_out": 0.02,
  "feature_centers": [[1, 1, 0, 0], [0, 0, 1, 1]],
  "noise": 0.3,
  "seed": 5
}"#;

const CONFIG: &str = r#"{
  "S": 3, "alpha": 0.5, "tau": 0.5, "pe": 0.2, "px": 0.25,
  "epochs": 4, "lr": 0.01, "seed": 1,
  "dims": {"d1": 16, "d_h": 16, "d": 8}
}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fgwclust"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("spec.json"), SPEC).unwrap();
        fs::write(f.path("config.json"), CONFIG).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, out: &str) -> PathBuf {
        let out = self.path(out);
        let o = run(bin()
            .args(["synth", "--spec"])
            .arg(self.path("spec.json"))
            .arg("--out")
            .arg(&out));
        assert!(o.status.success(), "{}", stderr(&o));
        out
    }

    fn train(&self, data: &Path, out: &str, extra: &[&str]) -> (Output, PathBuf) {
        let out = self.path(out);
        let o = run(bin()
            .args(["train", "--config"])
            .arg(self.path("config.json"))
            .arg("--data")
            .arg(data)
            .arg("--out")
            .arg(&out)
            .args(extra));
        (o, out)
    }

    fn eval(&self, ckpt: &Path, data: &Path, out: &str) -> (Output, PathBuf) {
        let out = self.path(out);
        let o = run(bin()
            .arg("eval")
            .arg("--checkpoint")
            .arg(ckpt)
            .arg("--data")
            .arg(data)
            .arg("--out")
            .arg(&out));
        (o, out)
    }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn synth_writes_loadable_reproducible_files() {
    let f = Fixture::new();
    let a = f.synth("a");
    let b = f.synth("b");
    for name in ["edges.txt", "features.fgm", "labels.txt"] {
        assert_eq!(read(a.join(name)), read(b.join(name)), "{name}");
    }
    let g = load_dir(&a).unwrap();
    assert_eq!(g.n_nodes(), 40);
    assert_eq!(g.n_features(), 4);

    // load -> re-emit is byte-identical
    let again = f.path("again");
    write_dir(&again, &g).unwrap();
    for name in ["edges.txt", "features.fgm", "labels.txt"] {
        assert_eq!(read(a.join(name)), read(again.join(name)), "{name}");
    }
}

#[test]
fn synth_without_cross_block_edges() {
    let f = Fixture::new();
    fs::write(
        f.path("spec.json"),
        SPEC.replace("\"p_out\": 0.02", "\"p_out\": 0"),
    )
    .unwrap();
    let out = f.synth("data");
    let labels: Vec<usize> = String::from_utf8(read(out.join("labels.txt")))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let edges = String::from_utf8(read(out.join("edges.txt"))).unwrap();
    assert!(!edges.is_empty());
    for line in edges.lines() {
        let (u, v) = line.split_once(' ').unwrap();
        assert_eq!(
            labels[u.parse::<usize>().unwrap()],
            labels[v.parse::<usize>().unwrap()]
        );
    }
}

#[test]
fn invalid_spec_is_a_config_error() {
    let f = Fixture::new();
    fs::write(
        f.path("spec.json"),
        SPEC.replace("\"p_in\": 0.3", "\"p_in\": 0.01"),
    )
    .unwrap();
    let o = run(bin()
        .args(["synth", "--spec"])
        .arg(f.path("spec.json"))
        .arg("--out")
        .arg(f.path("x")));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_then_eval() {
    let f = Fixture::new();
    let data = f.synth("data");
    let (o, out) = f.train(&data, "run", &["--set", "ot.epsilon=0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["checkpoint.fgm", "loss.csv", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let loss = String::from_utf8(read(out.join("loss.csv"))).unwrap();
    assert_eq!(loss.lines().count(), 5);
    let manifest: RunManifest = serde_json::from_slice(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest.config["ot"]["epsilon"], json!(0.1));
    assert_eq!(manifest.config_hash, config_hash(&manifest.config));
    assert_eq!(manifest.seed, 1);
    assert!(manifest.dataset_id.starts_with("data@"));

    let ckpt = out.join("checkpoint.fgm");
    let (o1, e1) = f.eval(&ckpt, &data, "eval1");
    assert!(o1.status.success(), "{}", stderr(&o1));
    let (o2, e2) = f.eval(&ckpt, &data, "eval2");
    assert!(o2.status.success(), "{}", stderr(&o2));
    for name in [
        "metrics.json",
        "confusion.tsv",
        "histograms.tsv",
        "embeddings.fgm",
        "clusters.txt",
    ] {
        assert_eq!(read(e1.join(name)), read(e2.join(name)), "{name}");
    }
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(e1.join("metrics.json"))).unwrap();
    assert!(metrics["acc"].as_f64().unwrap() >= 0.5);
}

#[test]
fn thread_count_does_not_change_results() {
    let f = Fixture::new();
    let data = f.synth("data");
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = f.path(&format!("run{threads}"));
        let o = run(bin()
            .env("FGW_THREADS", threads)
            .args(["train", "--config"])
            .arg(f.path("config.json"))
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out));
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(read(out.join("checkpoint.fgm")));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn zero_epochs_gives_empty_trace() {
    let f = Fixture::new();
    let data = f.synth("data");
    let (o, out) = f.train(&data, "run", &["--set", "epochs=0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(out.join("loss.csv")), b"epoch,loss\n");
    assert!(out.join("checkpoint.fgm").is_file());
}

#[test]
fn missing_features_is_a_data_error() {
    let f = Fixture::new();
    let data = f.synth("data");
    fs::remove_file(data.join("features.fgm")).unwrap();
    let (o, _) = f.train(&data, "run", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("features.fgm"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_a_config_error() {
    let f = Fixture::new();
    let data = f.synth("data");
    for extra in [
        &["--set", "bogus=1"][..],
        &["--set", "tau=-1"],
        &["--set", "ablation.no_C=true"],
        &["--set", "novalue"],
    ] {
        let (o, _) = f.train(&data, "run", extra);
        assert_eq!(o.status.code(), Some(1), "{extra:?}: {}", stderr(&o));
    }
    let o = run(bin()
        .env("FGW_THREADS", "zero")
        .args(["synth", "--spec"])
        .arg(f.path("spec.json"))
        .arg("--out")
        .arg(f.path("x")));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_finite_features_abort_numerically() {
    let f = Fixture::new();
    let data = f.path("huge");
    fs::create_dir(&data).unwrap();
    fs::write(data.join("edges.txt"), "0 1\n1 2\n").unwrap();
    fs::write(
        data.join("features.csv"),
        "1e308,1e308\n-1e308,1e308\n1e308,-1e308\n",
    )
    .unwrap();
    let (o, _) = f.train(
        &data,
        "run",
        &["--set", "px=0", "--set", "pe=0", "--set", "S=2"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn eval_without_labels_writes_embeddings_only() {
    let f = Fixture::new();
    let data = f.synth("data");
    let (o, out) = f.train(&data, "run", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::remove_file(data.join("labels.txt")).unwrap();
    let (o, e) = f.eval(&out.join("checkpoint.fgm"), &data, "eval");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(e.join("embeddings.fgm").is_file());
    assert!(!e.join("metrics.json").exists());
    let r = fgwclust::fgm::load(e.join("embeddings.fgm")).unwrap();
    assert_eq!(r.dim(), (40, 3));
}

#[test]
fn eval_dimension_mismatch_is_a_data_error() {
    let f = Fixture::new();
    let data = f.synth("data");
    let (o, out) = f.train(&data, "run", &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(
        f.path("spec.json"),
        SPEC.replace("[[1, 1, 0, 0], [0, 0, 1, 1]]", "[[1, 0], [0, 1]]"),
    )
    .unwrap();
    let other = f.synth("other");
    let (o, _) = f.eval(&out.join("checkpoint.fgm"), &other, "eval");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn convert_linqs_export() {
    let f = Fixture::new();
    fs::write(f.path("t.content"), "a\t1\t0\tX\nb\t0\t1\tY\nc\t1\t1\tX\n").unwrap();
    fs::write(f.path("t.cites"), "a\tb\nc\ta\n").unwrap();
    let out = f.path("conv");
    let o = run(bin()
        .arg("convert")
        .arg("--content")
        .arg(f.path("t.content"))
        .arg("--cites")
        .arg(f.path("t.cites"))
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let g = load_dir(&out).unwrap();
    assert_eq!(g.n_nodes(), 3);
    assert_eq!(g.labels(), Some(&[0, 1, 0][..]));
    assert_eq!(read(out.join("classes.txt")), b"X\nY\n");
}

#[test]
fn config_hash_ignores_key_order() {
    let a: serde_json::Value =
        serde_json::from_str(r#"{"S": 3, "ot": {"epsilon": 0.1, "alpha": 0.5}, "tau": 0.5}"#)
            .unwrap();
    let b: serde_json::Value =
        serde_json::from_str(r#"{"tau": 0.5, "ot": {"alpha": 0.5, "epsilon": 0.1}, "S": 3}"#)
            .unwrap();
    assert_eq!(config_hash(&a), config_hash(&b));
    let c: serde_json::Value =
        serde_json::from_str(r#"{"tau": 0.5, "ot": {"alpha": 0.5, "epsilon": 0.2}, "S": 3}"#)
            .unwrap();
    assert_ne!(config_hash(&a), config_hash(&c));
}
