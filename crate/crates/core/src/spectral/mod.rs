//! Spectral co-clustering of a single block.
//!
//! The block is viewed as a bipartite graph between its rows and columns.
//! Rows and columns are embedded with the leading nontrivial singular vectors
//! of the degree-normalized block and clustered jointly with k-means.

mod embedding;
mod kmeans;
mod normalize;
mod svd;

pub use embedding::{build_embedding, leading_triplets, retained_pairs, SpectralEmbedding};
pub use kmeans::{kmeans, KMeansOptions, KMeansResult};
pub use normalize::{normalize, DegreePair, NormalizedMatrix};
pub use svd::{truncated_svd, LinearOperator, SvdOptions, SvdTriplets};

use serde::Serialize;
use thiserror::Error;

use crate::matrix::BlockView;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AtomError {
    #[error("empty block: no nonzero entries")]
    EmptyBlock,
    #[error("cluster count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("requested {requested} singular triplets but only {available} exist")]
    TooManyTriplets { requested: usize, available: usize },
    #[error("embedding needs {needed} singular triplets, got {found}")]
    TooFewVectors { needed: usize, found: usize },
    #[error("SVD did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
}

impl AtomError {
    /// Whether the failure is numerical rather than a property of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, AtomError::Convergence { .. } | AtomError::Degenerate(_))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AtomOptions {
    pub svd: SvdOptions,
    pub kmeans: KMeansOptions,
}

/// Co-cluster labels of one block, indexed by block-local row and column.
#[derive(Debug, Clone, Serialize)]
pub struct BlockCoClusterResult {
    /// `None` for rows dropped as empty.
    pub row_labels: Vec<Option<usize>>,
    pub col_labels: Vec<Option<usize>>,
    pub k: usize,
    pub inertia: f64,
    pub dropped_rows: Vec<usize>,
    pub dropped_cols: Vec<usize>,
    pub singular_values: Vec<f64>,
}

/// An atom co-clusterer: any method that labels one block's rows and columns.
pub trait AtomCoClusterer<T: Scalar>: Sync {
    fn cocluster(&self, block: &BlockView<'_, T>, k: usize, seed: u64) -> Result<BlockCoClusterResult, AtomError>;
}

/// The spectral atom.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralAtom {
    pub options: AtomOptions,
}

impl<T: Scalar> AtomCoClusterer<T> for SpectralAtom {
    fn cocluster(&self, block: &BlockView<'_, T>, k: usize, seed: u64) -> Result<BlockCoClusterResult, AtomError> {
        cocluster_block(block, k, seed, &self.options)
    }
}

/// Normalizes, embeds and clusters one block. Pure in `(block, k, seed)`.
pub fn cocluster_block<T: Scalar>(
    block: &BlockView<'_, T>,
    k: usize,
    seed: u64,
    opts: &AtomOptions,
) -> Result<BlockCoClusterResult, AtomError> {
    retained_pairs(k)?;
    let local = block.materialize();
    let normalized = normalize(&local)?;
    let triplets = leading_triplets(&normalized, k, &opts.svd, crate::seed::derive_seed(seed, &[0]))?;
    let emb = embedding::build_embedding_clamped(&triplets, &normalized.degrees, k)?;
    if log::log_enabled!(log::Level::Trace) {
        log::trace!(
            "block {:?} embedding: {}",
            block.coords(),
            serde_json::to_string(&emb).unwrap_or_default()
        );
    }
    let km = kmeans(&emb.z, k, crate::seed::derive_seed(seed, &[1]), &opts.kmeans)?;
    let (rows, cols) = block.shape();
    let mut row_labels = vec![None; rows];
    let mut col_labels = vec![None; cols];
    for (&r, &l) in normalized.kept_rows.iter().zip(&km.labels[..emb.n_rows]) {
        row_labels[r] = Some(l);
    }
    for (&c, &l) in normalized.kept_cols.iter().zip(&km.labels[emb.n_rows..]) {
        col_labels[c] = Some(l);
    }
    Ok(BlockCoClusterResult {
        row_labels,
        col_labels,
        k,
        inertia: km.inertia,
        dropped_rows: normalized.dropped_rows,
        dropped_cols: normalized.dropped_cols,
        singular_values: emb.singular_values.iter().map(|v| v.as_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DataMatrix;

    #[test]
    fn two_block_diagonal() {
        let a = DataMatrix::dense(
            4,
            4,
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let r = cocluster_block(&BlockView::whole(&a), 2, 3, &AtomOptions::default()).unwrap();
        let rows: Vec<usize> = r.row_labels.iter().map(|l| l.unwrap()).collect();
        let cols: Vec<usize> = r.col_labels.iter().map(|l| l.unwrap()).collect();
        assert_eq!(rows[0], rows[1]);
        assert_eq!(rows[2], rows[3]);
        assert_ne!(rows[0], rows[2]);
        assert_eq!(cols, rows);
    }

    #[test]
    fn empty_block_errors() {
        let a = DataMatrix::<f64>::zeros(3, 3).unwrap();
        assert!(matches!(
            cocluster_block(&BlockView::whole(&a), 2, 0, &AtomOptions::default()),
            Err(AtomError::EmptyBlock)
        ));
    }

    #[test]
    fn dropped_lines_are_unlabeled() {
        let a = DataMatrix::dense(3, 3, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0]).unwrap();
        let r = cocluster_block(&BlockView::whole(&a), 2, 0, &AtomOptions::default()).unwrap();
        assert_eq!(r.row_labels[1], None);
        assert_eq!(r.col_labels[2], None);
        assert_eq!(r.dropped_rows, vec![1]);
        assert_eq!(r.dropped_cols, vec![2]);
    }

    #[test]
    fn single_row_block_gets_one_label() {
        let a = DataMatrix::dense(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = cocluster_block(&BlockView::whole(&a), 3, 0, &AtomOptions::default()).unwrap();
        assert!(r.row_labels.iter().chain(&r.col_labels).all(|l| l.is_some()));
    }
}
