//! Text and binary on-disk formats for graphs.
//!
//! * edge list: one whitespace-separated `u v` pair per line, 0-indexed
//! * features: FGM1 binary (see [`crate::fgm`]) or CSV with one node per row
//! * labels: one non-negative integer per line
//!
//! Blank lines and lines starting with `#` are ignored in the text formats.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::AttributeGraph;
use crate::error::{Error, Result};
use crate::fgm;

fn text_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) => {
                let t = l.trim();
                (!t.is_empty() && !t.starts_with('#')).then(|| Ok((i + 1, t.to_owned())))
            }
        }))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Edge pairs with the 1-based line each came from.
pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Vec<(usize, usize, usize)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for item in text_lines(path)? {
        let (line, text) = item?;
        let mut it = text.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err(path, line, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| parse_err(path, line, format!("bad node id {tok:?}")))
        };
        let u = next()?;
        let v = next()?;
        if it.next().is_some() {
            return Err(parse_err(path, line, "trailing tokens after edge"));
        }
        out.push((u, v, line));
    }
    Ok(out)
}

/// Reads FGM1 when the magic matches, CSV otherwise.
pub fn read_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    if fgm::sniff(path)? {
        return fgm::load(path);
    }
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for item in text_lines(path)? {
        let (line, text) = item?;
        let before = data.len();
        for tok in text.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number {tok:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(
                    path,
                    line,
                    format!("row has {width} columns, expected {c}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    text_lines(path)?
        .map(|item| {
            let (line, text) = item?;
            text.parse()
                .map_err(|_| parse_err(path, line, format!("bad label {text:?}")))
        })
        .collect()
}

/// Loads a graph from its three component files and logs dropped self-loops.
pub fn load_graph(
    edge_list_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
    labels_path: Option<&Path>,
) -> Result<AttributeGraph> {
    let edge_path = edge_list_path.as_ref();
    let features = read_features(features_path)?;
    let n = features.nrows();
    let edges = read_edge_list(edge_path)?;
    if let Some(&(u, v, line)) = edges.iter().find(|&&(u, v, _)| u.max(v) >= n) {
        return Err(Error::NodeOutOfRange {
            path: edge_path.to_path_buf(),
            line,
            id: u.max(v),
            n_nodes: n,
        });
    }
    let labels = labels_path.map(read_labels).transpose()?;
    let (g, stats) =
        AttributeGraph::from_edges(features, edges.into_iter().map(|(u, v, _)| (u, v)), labels)?;
    if stats.self_loops > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            edge_path.display(),
            stats.self_loops
        );
    }
    Ok(g)
}

/// Standard file names inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DataFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
}

impl DataFiles {
    pub const EDGES: &'static str = "edges.txt";
    pub const FEATURES_FGM: &'static str = "features.fgm";
    pub const FEATURES_CSV: &'static str = "features.csv";
    pub const LABELS: &'static str = "labels.txt";

    /// Resolves `edges.txt`, `features.fgm` (or `features.csv`) and the optional
    /// `labels.txt` under `dir`. Missing required files are reported by path.
    pub fn locate(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let missing = |p: PathBuf| {
            Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            )
        };
        let edges = dir.join(Self::EDGES);
        if !edges.is_file() {
            return Err(missing(edges));
        }
        let features = [Self::FEATURES_FGM, Self::FEATURES_CSV]
            .iter()
            .map(|n| dir.join(n))
            .find(|p| p.is_file())
            .ok_or_else(|| missing(dir.join(Self::FEATURES_FGM)))?;
        let labels = Some(dir.join(Self::LABELS)).filter(|p| p.is_file());
        Ok(Self {
            edges,
            features,
            labels,
        })
    }
}

pub fn load_dir(dir: impl AsRef<Path>) -> Result<AttributeGraph> {
    let files = DataFiles::locate(dir)?;
    load_graph(&files.edges, &files.features, files.labels.as_deref())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

/// Writes each undirected edge once as `u v` with `u < v`, in sorted order.
pub fn write_edge_list(path: impl AsRef<Path>, g: &AttributeGraph) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features_csv(path: impl AsRef<Path>, x: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for row in x.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `edges.txt`, `features.fgm` and, when present, `labels.txt`.
/// Returns the written paths.
pub fn write_dir(dir: impl AsRef<Path>, g: &AttributeGraph) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        dir.join(DataFiles::EDGES),
        dir.join(DataFiles::FEATURES_FGM),
    ];
    write_edge_list(&written[0], g)?;
    fgm::save(&written[1], &g.features().view())?;
    if let Some(labels) = g.labels() {
        let p = dir.join(DataFiles::LABELS);
        write_labels(&p, labels)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn loads_text_formats() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "# comment\n0 1\n1 0\n\n2 2\n1 2\n");
        let x = write(dir.path(), "x.csv", "1,0\n0,1\n0.5,0.5\n");
        let l = write(dir.path(), "l.txt", "0\n1\n1\n");
        let g = load_graph(&e, &x, Some(&l)).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.features(), &array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
        assert_eq!(g.labels(), Some(&[0, 1, 1][..]));
        assert_eq!(g.n_classes(), Some(2));
    }

    #[test]
    fn node_out_of_range_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n1 5\n");
        let x = write(dir.path(), "x.csv", "1\n2\n");
        match load_graph(&e, &x, None).unwrap_err() {
            Error::NodeOutOfRange { line, id, .. } => assert_eq!((line, id), (2, 5)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n");
        let x = write(dir.path(), "x.csv", "1\n2\n");
        let l = write(dir.path(), "l.txt", "0\n");
        assert!(matches!(
            load_graph(&e, &x, Some(&l)),
            Err(Error::RowMismatch {
                what: "labels",
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn unparseable_lines_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.txt", "0 1\n\n0 x\n");
        let err = read_edge_list(&e).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let x = write(dir.path(), "x.csv", "1,2\n3\n");
        assert!(matches!(
            read_features(&x),
            Err(Error::Parse { line: 2, .. })
        ));

        let l = write(dir.path(), "l.txt", "1\n-1\n");
        assert!(matches!(read_labels(&l), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_features_names_path() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), DataFiles::EDGES, "0 1\n");
        let err = load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("features.fgm"), "{err}");
    }

    #[test]
    fn directory_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let x = array![[0.1, -2.5], [3.0, 1e-3], [7.25, 0.0]];
        let (g, _) = AttributeGraph::from_edges(x, [(2, 0), (1, 2)], Some(vec![1, 0, 1])).unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        write_dir(&a, &g).unwrap();
        write_dir(&b, &load_dir(&a).unwrap()).unwrap();
        for name in [DataFiles::EDGES, DataFiles::FEATURES_FGM, DataFiles::LABELS] {
            assert_eq!(
                fs::read(a.join(name)).unwrap(),
                fs::read(b.join(name)).unwrap()
            );
        }
    }

    #[test]
    fn csv_features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let x = array![[0.1, -2.5e-7], [3.0, 1.0 / 3.0]];
        write_features_csv(&p, &x).unwrap();
        assert_eq!(read_features(&p).unwrap(), x);
    }
}
