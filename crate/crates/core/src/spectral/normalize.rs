use serde::Serialize;

use super::AtomError;
use crate::matrix::DataMatrix;
use crate::scalar::Scalar;

/// Row and column sums of a block after empty lines are removed.
#[derive(Debug, Clone, Serialize)]
pub struct DegreePair<T> {
    pub row_degrees: Vec<T>,
    pub col_degrees: Vec<T>,
}

impl<T: Scalar> DegreePair<T> {
    /// Total mass, accumulated over rows.
    pub fn total(&self) -> f64 {
        self.row_degrees.iter().map(|d| d.as_f64()).sum()
    }
}

/// `D1^{-1/2} A D2^{-1/2}` over the nonempty rows and columns of a block.
#[derive(Debug, Clone)]
pub struct NormalizedMatrix<T> {
    pub matrix: DataMatrix<T>,
    pub degrees: DegreePair<T>,
    /// Block-local indices of the rows and columns that were kept.
    pub kept_rows: Vec<usize>,
    pub kept_cols: Vec<usize>,
    pub dropped_rows: Vec<usize>,
    pub dropped_cols: Vec<usize>,
}

impl<T: Scalar> NormalizedMatrix<T> {
    /// The singular pair for singular value 1: `(sqrt(d1), sqrt(d2)) / sqrt(total)`.
    pub fn trivial_pair(&self) -> (Vec<T>, Vec<T>) {
        let total = T::of(self.degrees.total()).sqrt();
        let u = self.degrees.row_degrees.iter().map(|&d| d.sqrt() / total).collect();
        let v = self.degrees.col_degrees.iter().map(|&d| d.sqrt() / total).collect();
        (u, v)
    }
}

/// Drops all-zero rows and columns and scales the rest by inverse square
/// roots of their degrees.
pub fn normalize<T: Scalar>(block: &DataMatrix<T>) -> Result<NormalizedMatrix<T>, AtomError> {
    let row_sums = block.row_sums();
    let col_sums = block.col_sums();
    let split = |sums: &[T]| -> (Vec<usize>, Vec<usize>) { (0..sums.len()).partition(|&i| sums[i] > T::zero()) };
    let (kept_rows, dropped_rows) = split(&row_sums);
    let (kept_cols, dropped_cols) = split(&col_sums);
    if kept_rows.is_empty() {
        return Err(AtomError::EmptyBlock);
    }
    let mut matrix = block.select(&kept_rows, &kept_cols).expect("kept indices are in range");
    let row_degrees: Vec<T> = kept_rows.iter().map(|&r| row_sums[r]).collect();
    let col_degrees: Vec<T> = kept_cols.iter().map(|&c| col_sums[c]).collect();
    matrix.degree_normalize(&row_degrees, &col_degrees);
    Ok(NormalizedMatrix {
        matrix,
        degrees: DegreePair { row_degrees, col_degrees },
        kept_rows,
        kept_cols,
        dropped_rows,
        dropped_cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::StorageKind;

    #[test]
    fn identity_stays_identity() {
        let id = DataMatrix::<f64>::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let n = normalize(&id).unwrap();
        assert_eq!(n.matrix.to_dense_values(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(n.degrees.row_degrees, vec![1.0, 1.0]);
    }

    #[test]
    fn all_ones_becomes_half() {
        let ones = DataMatrix::<f64>::dense(2, 2, vec![1.0; 4]).unwrap();
        let n = normalize(&ones).unwrap();
        assert_eq!(n.matrix.to_dense_values(), vec![0.5; 4]);
        let (u, v) = n.trivial_pair();
        // A_n v = u with singular value 1
        let mut y = vec![0.0; 2];
        n.matrix.mul_vec(&v, &mut y);
        for (a, b) in y.iter().zip(&u) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_lines_are_dropped() {
        let m = DataMatrix::<f64>::dense(3, 3, vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 1.0])
            .unwrap()
            .to_storage(StorageKind::Sparse);
        let n = normalize(&m).unwrap();
        assert_eq!(n.dropped_rows, vec![1]);
        assert_eq!(n.dropped_cols, vec![1]);
        assert_eq!(n.kept_rows, vec![0, 2]);
        assert_eq!(n.matrix.shape(), (2, 2));
        let total: f64 = n.degrees.col_degrees.iter().sum();
        assert_eq!(total, n.degrees.total());
    }

    #[test]
    fn empty_block_is_an_error() {
        let z = DataMatrix::<f64>::zeros(3, 2).unwrap();
        assert!(matches!(normalize(&z), Err(AtomError::EmptyBlock)));
    }
}
