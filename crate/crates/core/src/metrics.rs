//! Partition agreement metrics.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::merge::LabelAssignment;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} items, got {found}")]
    TooFew { needed: usize, found: usize },
}

/// Counts of items per (predicted cluster, true cluster).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub pred_marginals: Vec<u64>,
    pub truth_marginals: Vec<u64>,
    pub total: u64,
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self, MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
        }
        let (p, np) = dense_ids(pred);
        let (t, nt) = dense_ids(truth);
        let mut counts = vec![vec![0u64; nt]; np];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let pred_marginals = counts.iter().map(|row| row.iter().sum()).collect();
        let truth_marginals = (0..nt).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            pred_marginals,
            truth_marginals,
            total: pred.len() as u64,
        })
    }
}

fn entropy(marginals: &[u64], n: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
/// Two single-cluster partitions score 1; if only one is single-cluster the
/// score is 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total == 0 {
        return Err(MetricError::TooFew { needed: 1, found: 0 });
    }
    let n = table.total as f64;
    let hp = entropy(&table.pred_marginals, n);
    let ht = entropy(&table.truth_marginals, n);
    let (sp, st) = (table.pred_marginals.len() == 1, table.truth_marginals.len() == 1);
    if sp && st {
        return Ok(1.0);
    }
    if sp || st {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (table.pred_marginals[i] as f64 * table.truth_marginals[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// Adjusted Rand index. When the expected and maximal indices coincide
/// (both partitions trivial in the same way) the score is 1.
///
/// Pair counts are kept as integers and the ratio is scaled by the total
/// pair count, so the only rounding is the final division.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64, MetricError> {
    let table = ContingencyTable::new(pred, truth)?;
    if table.total < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            found: table.total as usize,
        });
    }
    let index: i128 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: i128 = table.pred_marginals.iter().map(|&c| pairs(c)).sum();
    let b: i128 = table.truth_marginals.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.total);
    // (index - ab/P) / ((a+b)/2 - ab/P), multiplied through by 2P
    let num = 2 * (index * total - a * b);
    let denom = (a + b) * total - 2 * a * b;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoClusterScores {
    pub row_nmi: f64,
    pub col_nmi: f64,
    pub mean_nmi: f64,
    pub row_ari: f64,
    pub col_ari: f64,
}

/// NMI and ARI of the row and column labelings separately.
pub fn cocluster_nmi(pred: &LabelAssignment, truth: &LabelAssignment) -> Result<CoClusterScores, MetricError> {
    let row_nmi = nmi(&pred.row_labels, &truth.row_labels)?;
    let col_nmi = nmi(&pred.col_labels, &truth.col_labels)?;
    let ari_or_one = |a: &[usize], b: &[usize]| if a.len() < 2 { Ok(1.0) } else { ari(a, b) };
    Ok(CoClusterScores {
        row_nmi,
        col_nmi,
        mean_nmi: 0.5 * (row_nmi + col_nmi),
        row_ari: ari_or_one(&pred.row_labels, &truth.row_labels)?,
        col_ari: ari_or_one(&pred.col_labels, &truth.col_labels)?,
    })
}
