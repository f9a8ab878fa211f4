use serde::{Deserialize, Serialize};

use super::{DataMatrix, MatrixError};
use crate::scalar::Scalar;

/// Block sizes along each axis of an `m x n` grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
}

impl Grid {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Result<Self, MatrixError> {
        if row_sizes.is_empty() || col_sizes.is_empty() {
            return Err(MatrixError::Grid("grid needs at least one block per axis".into()));
        }
        if row_sizes.iter().chain(&col_sizes).any(|&s| s == 0) {
            return Err(MatrixError::Grid("block sizes must be at least 1".into()));
        }
        Ok(Self { row_sizes, col_sizes })
    }

    /// Splits `n_rows` into `m` and `n_cols` into `n` near-equal parts; the
    /// first `n_rows % m` row blocks are one larger than the rest.
    pub fn balanced(n_rows: usize, m: usize, n_cols: usize, n: usize) -> Result<Self, MatrixError> {
        if m == 0 || n == 0 || m > n_rows || n > n_cols {
            return Err(MatrixError::Grid(format!(
                "cannot split {n_rows}x{n_cols} into a {m}x{n} grid"
            )));
        }
        Self::new(balanced_sizes(n_rows, m), balanced_sizes(n_cols, n))
    }

    pub fn m(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn n(&self) -> usize {
        self.col_sizes.len()
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    fn check_covers(&self, n_rows: usize, n_cols: usize) -> Result<(), MatrixError> {
        let rows: usize = self.row_sizes.iter().sum();
        let cols: usize = self.col_sizes.iter().sum();
        if rows != n_rows || cols != n_cols {
            return Err(MatrixError::Grid(format!(
                "block sizes sum to {rows}x{cols}, matrix is {n_rows}x{n_cols}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn balanced_sizes(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Read-only window onto a parent matrix.
///
/// `row_span` and `col_span` hold parent (global) indices. For a permuted
/// round they are consecutive slices of the permutation, so the block is the
/// contiguous block of the permuted matrix without copying it.
#[derive(Debug, Clone)]
pub struct BlockView<'a, T> {
    coords: (usize, usize),
    row_span: Vec<usize>,
    col_span: Vec<usize>,
    parent: &'a DataMatrix<T>,
}

impl<'a, T: Scalar> BlockView<'a, T> {
    /// 0-based `(i, j)` position in the grid.
    pub fn coords(&self) -> (usize, usize) {
        self.coords
    }

    pub fn row_span(&self) -> &[usize] {
        &self.row_span
    }

    pub fn col_span(&self) -> &[usize] {
        &self.col_span
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_span.len(), self.col_span.len())
    }

    pub fn parent(&self) -> &'a DataMatrix<T> {
        self.parent
    }

    /// Copies the block into its own matrix, same storage kind as the parent.
    pub fn materialize(&self) -> DataMatrix<T> {
        self.parent
            .select(&self.row_span, &self.col_span)
            .expect("block spans are validated at extraction")
    }

    /// A view covering the whole matrix, used for monolithic runs.
    pub fn whole(parent: &'a DataMatrix<T>) -> Self {
        Self {
            coords: (0, 0),
            row_span: (0..parent.n_rows()).collect(),
            col_span: (0..parent.n_cols()).collect(),
            parent,
        }
    }
}

/// Splits the matrix into `m * n` contiguous blocks in row-major block order.
pub fn extract_blocks<'a, T: Scalar>(
    matrix: &'a DataMatrix<T>,
    grid: &Grid,
) -> Result<Vec<BlockView<'a, T>>, MatrixError> {
    let rows: Vec<usize> = (0..matrix.n_rows()).collect();
    let cols: Vec<usize> = (0..matrix.n_cols()).collect();
    extract_permuted_blocks(matrix, grid, &rows, &cols)
}

/// Blocks of `permute(matrix, row_order, col_order)` expressed as views onto
/// the unpermuted matrix.
pub fn extract_permuted_blocks<'a, T: Scalar>(
    matrix: &'a DataMatrix<T>,
    grid: &Grid,
    row_order: &[usize],
    col_order: &[usize],
) -> Result<Vec<BlockView<'a, T>>, MatrixError> {
    grid.check_covers(matrix.n_rows(), matrix.n_cols())?;
    if row_order.len() != matrix.n_rows() || col_order.len() != matrix.n_cols() {
        return Err(MatrixError::Permutation("order length does not match the matrix".into()));
    }
    let row_spans = spans(row_order, grid.row_sizes());
    let col_spans = spans(col_order, grid.col_sizes());
    let mut blocks = Vec::with_capacity(grid.m() * grid.n());
    for (i, rs) in row_spans.iter().enumerate() {
        for (j, cs) in col_spans.iter().enumerate() {
            blocks.push(BlockView {
                coords: (i, j),
                row_span: rs.to_vec(),
                col_span: cs.to_vec(),
                parent: matrix,
            });
        }
    }
    Ok(blocks)
}

fn spans<'o>(order: &'o [usize], sizes: &[usize]) -> Vec<&'o [usize]> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let span = &order[start..start + s];
            start += s;
            span
        })
        .collect()
}
