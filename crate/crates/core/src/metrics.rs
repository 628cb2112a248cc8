//! External clustering metrics after mapping cluster ids onto classes.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::ClusterLabels;

/// `counts[i][j]` = number of points with predicted cluster `i` and class `j`.
fn contingency(pred: &ClusterLabels, truth: &ClusterLabels) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; truth.n_clusters()]; pred.n_clusters()];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        m[p][t] += 1;
    }
    m
}

fn check_pair(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::RowMismatch {
            what: "predicted labels",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.n_clusters() != truth.n_clusters() {
        return Err(Error::Shape(format!(
            "{} clusters vs {} classes",
            pred.n_clusters(),
            truth.n_clusters()
        )));
    }
    Ok(())
}

/// Resolution of the tie-breaking term in [`lsa_map`].
const F1_SCALE: f64 = 1e9;

/// Cluster-to-class permutation maximizing the number of matched points.
///
/// Among count-optimal matchings the one with the largest macro-F1 wins. Pairing cluster
/// `i` with class `j` contributes `2 n_ij / (|i| + |j|)` to the F1 sum independently of
/// the other pairs, so both objectives fit one integer assignment problem: the F1 term
/// is quantized to `1 / F1_SCALE` and weighted below one matched point. Without it, ties
/// would be resolved by cluster index and F1 would change under relabeling.
pub fn lsa_map(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<Vec<usize>> {
    check_pair(pred, truth)?;
    let counts = contingency(pred, truth);
    let c = truth.n_clusters();
    if c == 0 {
        return Ok(Vec::new());
    }
    let rows = pred.histogram();
    let cols = truth.histogram();
    let per_point = c as i64 * F1_SCALE as i64 + 1;
    let weights = Matrix::from_fn(c, c, |(i, j)| {
        let n = counts[i][j];
        let f1 = if n == 0 {
            0
        } else {
            (2.0 * n as f64 / (rows[i] + cols[j]) as f64 * F1_SCALE).round() as i64
        };
        n as i64 * per_point + f1
    });
    Ok(kuhn_munkres(&weights).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub macro_f1: f64,
    pub nmi: f64,
    pub ari: f64,
    pub per_class_f1: Vec<f64>,
    /// Rows are true classes, columns mapped predictions.
    pub confusion: Vec<Vec<usize>>,
    pub pred_histogram: Vec<usize>,
    pub true_histogram: Vec<usize>,
    /// `mapping[cluster] = class`.
    pub mapping: Vec<usize>,
}

fn xlogx_sum(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn comb2(k: usize) -> f64 {
    (k as f64) * (k as f64 - 1.0) / 2.0
}

/// NMI with the arithmetic mean of the two entropies as normalizer.
pub fn nmi(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    check_len(pred, truth)?;
    let n = pred.len() as f64;
    let m = contingency(pred, truth);
    let rows = pred.histogram();
    let cols = truth.histogram();
    let h_pred = xlogx_sum(rows.iter().copied(), n);
    let h_true = xlogx_sum(cols.iter().copied(), n);
    if h_pred == 0.0 && h_true == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((h_pred + h_true) / 2.0)).clamp(0.0, 1.0))
}

/// Adjusted Rand index from the contingency table.
pub fn ari(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    check_len(pred, truth)?;
    let m = contingency(pred, truth);
    let index: f64 = m.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = pred.histogram().into_iter().map(comb2).sum();
    let sum_b: f64 = truth.histogram().into_iter().map(comb2).sum();
    let total = comb2(pred.len());
    let expected = if total > 0.0 {
        sum_a * sum_b / total
    } else {
        0.0
    };
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn check_len(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<()> {
    if pred.len() == truth.len() {
        Ok(())
    } else {
        Err(Error::RowMismatch {
            what: "predicted labels",
            expected: truth.len(),
            got: pred.len(),
        })
    }
}

pub fn evaluate(pred: &ClusterLabels, truth: &ClusterLabels) -> Result<MetricsReport> {
    let mapping = lsa_map(pred, truth)?;
    let c = truth.n_clusters();
    let mapped = ClusterLabels::new(pred.labels().iter().map(|&p| mapping[p]).collect(), c)?;
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &t) in mapped.labels().iter().zip(truth.labels()) {
        confusion[t][p] += 1;
    }
    let n = pred.len();
    let hits: usize = (0..c).map(|k| confusion[k][k]).sum();
    let per_class_f1: Vec<f64> = (0..c)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let actual: usize = confusion[k].iter().sum();
            let denom = (predicted + actual) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    Ok(MetricsReport {
        acc: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        macro_f1: if c == 0 {
            0.0
        } else {
            per_class_f1.iter().sum::<f64>() / c as f64
        },
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
        per_class_f1,
        pred_histogram: mapped.histogram(),
        true_histogram: truth.histogram(),
        confusion,
        mapping,
    })
}

impl MetricsReport {
    pub fn confusion_tsv(&self) -> String {
        let c = self.confusion.len();
        let mut out = String::from("true\\pred");
        for j in 0..c {
            out.push_str(&format!("\t{j}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!("\t{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn histograms_tsv(&self) -> String {
        let mut out = String::from("class\tpredicted\ttrue\n");
        for (k, (p, t)) in self
            .pred_histogram
            .iter()
            .zip(&self.true_histogram)
            .enumerate()
        {
            out.push_str(&format!("{k}\t{p}\t{t}\n"));
        }
        out
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ACC {:.2}  NMI {:.2}  ARI {:.2}  F1 {:.2}",
            100.0 * self.acc,
            100.0 * self.nmi,
            100.0 * self.ari,
            100.0 * self.macro_f1
        )
    }
}
