//! Matrix storage, ingestion, permutation and block extraction.
//!
//! A [`DataMatrix`] is immutable once built. Values are finite and
//! nonnegative; the spectral atom divides by row and column sums, so this is
//! checked once at construction instead of at every use.

mod block;
mod io;
mod planted;

pub use block::{extract_blocks, extract_permuted_blocks, BlockView, Grid};
pub use io::{
    load_dense_csv, load_matrix_market, parse_dense_csv, parse_matrix_market, save_matrix_market,
    write_matrix_market,
};
pub use planted::{PlantedCoCluster, PlantedGroundTruth, PlantedSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{location}: entry ({row}, {col}) has value {value}; entries must be finite and nonnegative")]
    Domain {
        location: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    Duplicate { row: usize, col: usize },
    #[error("entry ({row}, {col}) is outside a {n_rows}x{n_cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("invalid permutation: {0}")]
    Permutation(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid planted truth: {0}")]
    Planted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    Dense,
    Sparse,
}

/// Compressed sparse row storage. Column indices are strictly increasing
/// within each row and no stored value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone)]
pub enum Storage<T> {
    /// Row-major values.
    Dense(Vec<T>),
    Sparse(Csr<T>),
}

/// The nonnegative `n_rows x n_cols` data matrix. Row and column identities
/// are their 0-based indices.
#[derive(Debug, Clone)]
pub struct DataMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    storage: Storage<T>,
}

fn check_value<T: Scalar>(value: T, row: usize, col: usize, location: impl FnOnce() -> String) -> Result<(), MatrixError> {
    if value.is_finite() && value >= T::zero() {
        Ok(())
    } else {
        Err(MatrixError::Domain {
            location: location(),
            row,
            col,
            value: value.as_f64(),
        })
    }
}

fn check_shape(n_rows: usize, n_cols: usize) -> Result<(), MatrixError> {
    if n_rows == 0 || n_cols == 0 {
        return Err(MatrixError::Shape(format!(
            "matrix must have at least one row and one column, got {n_rows}x{n_cols}"
        )));
    }
    Ok(())
}

impl<T: Scalar> DataMatrix<T> {
    /// Builds a dense matrix from row-major values.
    pub fn dense(n_rows: usize, n_cols: usize, values: Vec<T>) -> Result<Self, MatrixError> {
        check_shape(n_rows, n_cols)?;
        if values.len() != n_rows * n_cols {
            return Err(MatrixError::Shape(format!(
                "{} values cannot fill a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            check_value(v, idx / n_cols, idx % n_cols, || "dense input".to_string())?;
        }
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Dense(values),
        })
    }

    /// Builds a sparse matrix from `(row, col, value)` triplets. Explicit
    /// zeros are dropped; duplicate coordinates are rejected.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, entries: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        check_shape(n_rows, n_cols)?;
        let mut triplets = Vec::new();
        for (row, col, value) in entries {
            if row >= n_rows || col >= n_cols {
                return Err(MatrixError::OutOfBounds {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
            check_value(value, row, col, || "triplet input".to_string())?;
            triplets.push((row, col, value));
        }
        Self::from_checked_triplets(n_rows, n_cols, triplets)
    }

    pub(crate) fn from_checked_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self, MatrixError> {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = triplets.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(MatrixError::Duplicate {
                row: w[0].0,
                col: w[0].1,
            });
        }
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if v == T::zero() {
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            storage: Storage::Sparse(Csr {
                indptr,
                indices,
                values,
            }),
        })
    }

    /// All-zero sparse matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Result<Self, MatrixError> {
        Self::from_triplets(n_rows, n_cols, std::iter::empty())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn storage(&self) -> &Storage<T> {
        &self.storage
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.storage {
            Storage::Dense(_) => StorageKind::Dense,
            Storage::Sparse(_) => StorageKind::Sparse,
        }
    }

    /// Number of stored nonzero values.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.iter().filter(|&&x| x != T::zero()).count(),
            Storage::Sparse(csr) => csr.nnz(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        assert!(row < self.n_rows && col < self.n_cols, "index out of bounds");
        match &self.storage {
            Storage::Dense(v) => v[row * self.n_cols + col],
            Storage::Sparse(csr) => {
                let (idx, vals) = csr.row(row);
                idx.binary_search(&col).map_or(T::zero(), |p| vals[p])
            }
        }
    }

    /// Calls `f(col, value)` for every nonzero entry of `row`, in column order.
    #[inline]
    pub fn for_each_in_row(&self, row: usize, mut f: impl FnMut(usize, T)) {
        match &self.storage {
            Storage::Dense(v) => {
                let start = row * self.n_cols;
                for (c, &x) in v[start..start + self.n_cols].iter().enumerate() {
                    if x != T::zero() {
                        f(c, x);
                    }
                }
            }
            Storage::Sparse(csr) => {
                let (idx, vals) = csr.row(row);
                for (&c, &x) in idx.iter().zip(vals) {
                    f(c, x);
                }
            }
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows)
            .map(|r| {
                let mut s = T::zero();
                self.for_each_in_row(r, |_, v| s += v);
                s
            })
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.n_cols];
        for r in 0..self.n_rows {
            self.for_each_in_row(r, |c, v| sums[c] += v);
        }
        sums
    }

    /// Sum of all entries, accumulated in `f64`.
    pub fn total(&self) -> f64 {
        let mut s = 0.0;
        for r in 0..self.n_rows {
            self.for_each_in_row(r, |_, v| s += v.as_f64());
        }
        s
    }

    /// Adds the listed rows into `acc` (length `n_cols`).
    pub fn accumulate_rows(&self, rows: &[usize], acc: &mut [f64]) {
        debug_assert_eq!(acc.len(), self.n_cols);
        match &self.storage {
            Storage::Dense(v) => {
                for &r in rows {
                    let row = &v[r * self.n_cols..(r + 1) * self.n_cols];
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += x.as_f64();
                    }
                }
            }
            Storage::Sparse(_) => {
                for &r in rows {
                    self.for_each_in_row(r, |c, v| acc[c] += v.as_f64());
                }
            }
        }
    }

    /// Row-major dense copy of the values.
    pub fn to_dense_values(&self) -> Vec<T> {
        match &self.storage {
            Storage::Dense(v) => v.clone(),
            Storage::Sparse(_) => {
                let mut out = vec![T::zero(); self.n_rows * self.n_cols];
                for r in 0..self.n_rows {
                    self.for_each_in_row(r, |c, v| out[r * self.n_cols + c] = v);
                }
                out
            }
        }
    }

    pub fn to_storage(&self, kind: StorageKind) -> Self {
        match (kind, &self.storage) {
            (StorageKind::Dense, Storage::Dense(_)) | (StorageKind::Sparse, Storage::Sparse(_)) => self.clone(),
            (StorageKind::Dense, Storage::Sparse(_)) => Self {
                n_rows: self.n_rows,
                n_cols: self.n_cols,
                storage: Storage::Dense(self.to_dense_values()),
            },
            (StorageKind::Sparse, Storage::Dense(_)) => {
                let mut triplets = Vec::new();
                for r in 0..self.n_rows {
                    self.for_each_in_row(r, |c, v| triplets.push((r, c, v)));
                }
                Self::from_checked_triplets(self.n_rows, self.n_cols, triplets).expect("dense input has no duplicates")
            }
        }
    }

    pub fn transpose(&self) -> Self {
        match &self.storage {
            Storage::Dense(v) => {
                let mut out = vec![T::zero(); v.len()];
                for r in 0..self.n_rows {
                    for c in 0..self.n_cols {
                        out[c * self.n_rows + r] = v[r * self.n_cols + c];
                    }
                }
                Self {
                    n_rows: self.n_cols,
                    n_cols: self.n_rows,
                    storage: Storage::Dense(out),
                }
            }
            Storage::Sparse(_) => {
                let mut triplets = Vec::with_capacity(self.nnz());
                for r in 0..self.n_rows {
                    self.for_each_in_row(r, |c, v| triplets.push((c, r, v)));
                }
                Self::from_checked_triplets(self.n_cols, self.n_rows, triplets).expect("transpose keeps entries unique")
            }
        }
    }

    /// Submatrix with `out(r, c) = self(rows[r], cols[c])`, same storage kind.
    /// Indices may repeat; they must be in bounds.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Result<Self, MatrixError> {
        check_shape(rows.len(), cols.len())?;
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(MatrixError::OutOfBounds {
                row: r,
                col: 0,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_cols) {
            return Err(MatrixError::OutOfBounds {
                row: 0,
                col: c,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        let storage = match &self.storage {
            Storage::Dense(v) => {
                let mut out = Vec::with_capacity(rows.len() * cols.len());
                for &r in rows {
                    let base = r * self.n_cols;
                    out.extend(cols.iter().map(|&c| v[base + c]));
                }
                Storage::Dense(out)
            }
            Storage::Sparse(csr) => {
                // local column positions for each parent column
                let mut positions: Vec<Vec<usize>> = vec![Vec::new(); self.n_cols];
                for (local, &c) in cols.iter().enumerate() {
                    positions[c].push(local);
                }
                let mut indptr = Vec::with_capacity(rows.len() + 1);
                indptr.push(0);
                let mut indices = Vec::new();
                let mut values = Vec::new();
                let mut row_buf: Vec<(usize, T)> = Vec::new();
                for &r in rows {
                    row_buf.clear();
                    let (idx, vals) = csr.row(r);
                    for (&c, &x) in idx.iter().zip(vals) {
                        for &local in &positions[c] {
                            row_buf.push((local, x));
                        }
                    }
                    row_buf.sort_unstable_by_key(|&(c, _)| c);
                    for &(c, x) in &row_buf {
                        indices.push(c);
                        values.push(x);
                    }
                    indptr.push(indices.len());
                }
                Storage::Sparse(Csr {
                    indptr,
                    indices,
                    values,
                })
            }
        };
        Ok(Self {
            n_rows: rows.len(),
            n_cols: cols.len(),
            storage,
        })
    }
}

impl<T: Scalar> PartialEq for DataMatrix<T> {
    /// Entrywise equality, independent of storage kind.
    fn eq(&self, other: &Self) -> bool {
        if self.shape() != other.shape() {
            return false;
        }
        match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => a == b,
            (Storage::Sparse(a), Storage::Sparse(b)) => a == b,
            _ => self.to_dense_values() == other.to_dense_values(),
        }
    }
}

fn check_permutation(perm: &[usize], len: usize, axis: &str) -> Result<(), MatrixError> {
    if perm.len() != len {
        return Err(MatrixError::Permutation(format!(
            "{axis} permutation has length {}, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len {
            return Err(MatrixError::Permutation(format!("{axis} index {p} out of range 0..{len}")));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(MatrixError::Permutation(format!("{axis} index {p} appears twice")));
        }
    }
    Ok(())
}

/// Reorders rows and columns: `out(r, c) = matrix(row_perm[r], col_perm[c])`.
pub fn permute<T: Scalar>(
    matrix: &DataMatrix<T>,
    row_perm: &[usize],
    col_perm: &[usize],
) -> Result<DataMatrix<T>, MatrixError> {
    check_permutation(row_perm, matrix.n_rows(), "row")?;
    check_permutation(col_perm, matrix.n_cols(), "column")?;
    matrix.select(row_perm, col_perm)
}

/// Inverse of a permutation given as an index map.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl<T: Scalar> DataMatrix<T> {
    /// `y = A x`
    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        match &self.storage {
            Storage::Dense(v) => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let row = &v[r * self.n_cols..(r + 1) * self.n_cols];
                    *yr = crate::scalar::dot(row, x);
                }
            }
            Storage::Sparse(csr) => {
                for (r, yr) in y.iter_mut().enumerate() {
                    let (idx, vals) = csr.row(r);
                    *yr = idx.iter().zip(vals).fold(T::zero(), |acc, (&c, &a)| acc + a * x[c]);
                }
            }
        }
    }

    /// `y = A^T x`
    pub fn mul_t_vec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        y.iter_mut().for_each(|v| *v = T::zero());
        match &self.storage {
            Storage::Dense(v) => {
                for (r, &xr) in x.iter().enumerate() {
                    if xr != T::zero() {
                        crate::scalar::axpy(xr, &v[r * self.n_cols..(r + 1) * self.n_cols], y);
                    }
                }
            }
            Storage::Sparse(csr) => {
                for (r, &xr) in x.iter().enumerate() {
                    let (idx, vals) = csr.row(r);
                    for (&c, &a) in idx.iter().zip(vals) {
                        y[c] += a * xr;
                    }
                }
            }
        }
    }

    /// Divides entry `(r, c)` by `sqrt(row_deg[r] * col_deg[c])`.
    pub(crate) fn degree_normalize(&mut self, row_deg: &[T], col_deg: &[T]) {
        let n_cols = self.n_cols;
        match &mut self.storage {
            Storage::Dense(v) => {
                for (r, row) in v.chunks_mut(n_cols).enumerate() {
                    for (x, &cs) in row.iter_mut().zip(col_deg) {
                        *x /= (row_deg[r] * cs).sqrt();
                    }
                }
            }
            Storage::Sparse(csr) => {
                for r in 0..self.n_rows {
                    for p in csr.indptr[r]..csr.indptr[r + 1] {
                        csr.values[p] /= (row_deg[r] * col_deg[csr.indices[p]]).sqrt();
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity2() -> DataMatrix<f64> {
        DataMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)]).unwrap()
    }

    #[test]
    fn triplets_reject_duplicates_and_negatives() {
        let dup = DataMatrix::<f64>::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]);
        assert!(matches!(dup, Err(MatrixError::Duplicate { row: 0, col: 0 })));
        let neg = DataMatrix::<f64>::from_triplets(2, 2, [(1, 0, -1.0)]);
        assert!(matches!(neg, Err(MatrixError::Domain { row: 1, col: 0, .. })));
        let nan = DataMatrix::<f64>::dense(1, 2, vec![0.0, f64::NAN]);
        assert!(matches!(nan, Err(MatrixError::Domain { col: 1, .. })));
    }

    #[test]
    fn empty_shape_rejected() {
        assert!(DataMatrix::<f64>::zeros(0, 3).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let m = identity2();
        assert_eq!(permute(&m, &[0, 1], &[0, 1]).unwrap(), m);
    }

    #[test]
    fn swapping_rows_of_identity_gives_antidiagonal() {
        let m = identity2();
        let p = permute(&m, &[1, 0], &[0, 1]).unwrap();
        assert_eq!(p.to_dense_values(), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn permutation_errors() {
        let m = identity2();
        assert!(matches!(permute(&m, &[0], &[0, 1]), Err(MatrixError::Permutation(_))));
        assert!(matches!(permute(&m, &[1, 1], &[0, 1]), Err(MatrixError::Permutation(_))));
    }

    #[test]
    fn storage_conversion_and_transpose() {
        let d = DataMatrix::<f64>::dense(2, 3, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let s = d.to_storage(StorageKind::Sparse);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s, d);
        let t = s.transpose();
        assert_eq!(t.shape(), (3, 2));
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(d.transpose(), t);
        assert_eq!(d.row_sums(), vec![3.0, 3.0]);
        assert_eq!(d.col_sums(), vec![1.0, 3.0, 2.0]);
    }

    fn arb_matrix() -> impl Strategy<Value = (DataMatrix<f64>, Vec<usize>, Vec<usize>)> {
        (1usize..8, 1usize..8, any::<bool>()).prop_flat_map(|(r, c, sparse)| {
            (
                prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], r * c),
                Just((0..r).collect::<Vec<_>>()).prop_shuffle(),
                Just((0..c).collect::<Vec<_>>()).prop_shuffle(),
            )
                .prop_map(move |(vals, rp, cp)| {
                    let m = DataMatrix::dense(r, c, vals).unwrap();
                    let m = if sparse { m.to_storage(StorageKind::Sparse) } else { m };
                    (m, rp, cp)
                })
        })
    }

    proptest! {
        #[test]
        fn permute_preserves_values_and_inverts((m, rp, cp) in arb_matrix()) {
            let p = permute(&m, &rp, &cp).unwrap();
            for r in 0..m.n_rows() {
                for c in 0..m.n_cols() {
                    prop_assert_eq!(p.get(r, c), m.get(rp[r], cp[c]));
                }
            }
            let mut a: Vec<f64> = m.to_dense_values();
            let mut b: Vec<f64> = p.to_dense_values();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            let back = permute(&p, &invert_permutation(&rp), &invert_permutation(&cp)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
