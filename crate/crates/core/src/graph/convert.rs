//! Converter for the LINQS citation-network layout (Cora, Citeseer, Pubmed-Diabetes
//! tab-delimited exports): a `.content` file with `<id> <attr>... <class>` per line and a
//! `.cites` file with `<cited> <citing>` pairs.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use super::AttributeGraph;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LinqsDataset {
    pub graph: AttributeGraph,
    /// Class names indexed by label id (sorted lexicographically).
    pub class_names: Vec<String>,
    /// Original paper id of each node, in node order.
    pub node_ids: Vec<String>,
    /// Citation lines that referenced a paper absent from the content file.
    pub dangling_edges: usize,
}

/// Nodes are numbered in content-file order; citations become undirected edges.
pub fn convert_linqs(content: impl AsRef<Path>, cites: impl AsRef<Path>) -> Result<LinqsDataset> {
    let content = content.as_ref();
    let cites = cites.as_ref();
    let text = std::fs::read_to_string(content).map_err(|e| Error::io(content, e))?;

    let mut node_ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    let mut width = None;
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| Error::Parse {
            path: content.to_path_buf(),
            line: i + 1,
            msg,
        };
        if toks.len() < 3 {
            return Err(err("expected id, attributes and class".into()));
        }
        let attrs = &toks[1..toks.len() - 1];
        match width {
            None => width = Some(attrs.len()),
            Some(w) if w != attrs.len() => {
                return Err(err(format!("{} attributes, expected {w}", attrs.len())))
            }
            _ => {}
        }
        for a in attrs {
            data.push(
                a.parse::<f64>()
                    .map_err(|_| err(format!("bad attribute {a:?}")))?,
            );
        }
        node_ids.push(toks[0].to_owned());
        raw_labels.push(toks[toks.len() - 1].to_owned());
    }

    let mut class_names = raw_labels.clone();
    class_names.sort();
    class_names.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| class_names.binary_search(l).expect("class collected above"))
        .collect();

    let index: HashMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let cites_text = std::fs::read_to_string(cites).map_err(|e| Error::io(cites, e))?;
    let mut edges = Vec::new();
    let mut dangling = 0;
    for (i, line) in cites_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: cites.to_path_buf(),
                line: i + 1,
                msg: "expected two paper ids".into(),
            });
        }
        match (index.get(toks[0]), index.get(toks[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => dangling += 1,
        }
    }

    let n = node_ids.len();
    let x = Array2::from_shape_vec((n, width.unwrap_or(0)), data).map_err(|e| Error::Format {
        path: content.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (graph, stats) = AttributeGraph::from_edges(x, edges, Some(labels))?;
    if stats.self_loops > 0 {
        log::warn!(
            "{}: dropped {} self-citation(s)",
            cites.display(),
            stats.self_loops
        );
    }
    Ok(LinqsDataset {
        graph,
        class_names,
        node_ids,
        dangling_edges: dangling,
    })
}
