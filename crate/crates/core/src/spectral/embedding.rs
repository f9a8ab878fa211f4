use serde::Serialize;

use super::normalize::{DegreePair, NormalizedMatrix};
use super::svd::{deflated_svd, SvdOptions, SvdTriplets};
use super::AtomError;
use crate::scalar::Scalar;

/// Singular values closer than this to the last retained one are treated as
/// tied with it.
const TIE_TOL: f64 = 1e-6;

/// Stacked, degree-scaled singular vectors of a normalized block.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralEmbedding<T> {
    /// `(rows + cols) x l`, row-major per point: block rows first, then block columns.
    pub z: Vec<Vec<T>>,
    pub l: usize,
    /// The `l + 1` leading singular values, trivial one first.
    pub singular_values: Vec<T>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl<T: Scalar> SpectralEmbedding<T> {
    pub fn row_points(&self) -> &[Vec<T>] {
        &self.z[..self.n_rows]
    }

    pub fn col_points(&self) -> &[Vec<T>] {
        &self.z[self.n_rows..]
    }
}

/// Number of nontrivial singular pairs needed to separate `k` clusters.
pub fn retained_pairs(k: usize) -> Result<usize, AtomError> {
    if k < 2 {
        return Err(AtomError::InvalidK(k));
    }
    Ok(k.next_power_of_two().trailing_zeros() as usize)
}

/// Leading triplets of `A_n` with the trivial pair first. Computes
/// `retained_pairs(k)` further pairs, plus any tied ones up to `k - 1`,
/// clamped to what the block can supply.
pub fn leading_triplets<T: Scalar>(
    normalized: &NormalizedMatrix<T>,
    k: usize,
    opts: &SvdOptions,
    seed: u64,
) -> Result<SvdTriplets<T>, AtomError> {
    let l = retained_pairs(k)?;
    let available = normalized.matrix.n_rows().min(normalized.matrix.n_cols()) - 1;
    let count = l.min(available);
    let extra = (k - 1).min(available) - count;
    let (u1, v1) = normalized.trivial_pair();
    let rest = deflated_svd(&normalized.matrix, count, extra, std::slice::from_ref(&u1), std::slice::from_ref(&v1), opts, seed)?;
    let mut out = SvdTriplets {
        values: vec![T::one()],
        left: vec![u1],
        right: vec![v1],
        residuals: vec![0.0],
    };
    out.values.extend(rest.values);
    out.left.extend(rest.left);
    out.right.extend(rest.right);
    out.residuals.extend(rest.residuals);
    Ok(out)
}

/// Builds `Z = [D1^{-1/2} U; D2^{-1/2} V]` from the nontrivial vectors.
///
/// `l = ceil(log2 k)`, extended by any later triplets whose singular value
/// ties with the `l`-th (so that a block with several exactly separated
/// components is not cut arbitrarily), never beyond `k - 1`.
pub fn build_embedding<T: Scalar>(
    triplets: &SvdTriplets<T>,
    degrees: &DegreePair<T>,
    k: usize,
) -> Result<SpectralEmbedding<T>, AtomError> {
    let l = retained_pairs(k)?;
    if triplets.len() < l + 1 {
        return Err(AtomError::TooFewVectors {
            needed: l + 1,
            found: triplets.len(),
        });
    }
    Ok(stack(triplets, degrees, l, k))
}

/// `build_embedding` with `l` clamped to the triplets on hand, for blocks
/// too thin to supply `ceil(log2 k)` nontrivial pairs.
pub(crate) fn build_embedding_clamped<T: Scalar>(
    triplets: &SvdTriplets<T>,
    degrees: &DegreePair<T>,
    k: usize,
) -> Result<SpectralEmbedding<T>, AtomError> {
    let l = retained_pairs(k)?.min(triplets.len().saturating_sub(1));
    Ok(stack(triplets, degrees, l, k))
}

fn stack<T: Scalar>(triplets: &SvdTriplets<T>, degrees: &DegreePair<T>, mut l: usize, k: usize) -> SpectralEmbedding<T> {
    let anchor = triplets.values[l].as_f64();
    while l < k - 1 && l + 1 < triplets.len() && (anchor - triplets.values[l + 1].as_f64()).abs() <= TIE_TOL {
        l += 1;
    }
    let n_rows = degrees.row_degrees.len();
    let n_cols = degrees.col_degrees.len();
    let mut z = Vec::with_capacity(n_rows + n_cols);
    for (i, d) in degrees.row_degrees.iter().enumerate() {
        let s = T::one() / d.sqrt();
        z.push((1..=l).map(|j| triplets.left[j][i] * s).collect());
    }
    for (i, d) in degrees.col_degrees.iter().enumerate() {
        let s = T::one() / d.sqrt();
        z.push((1..=l).map(|j| triplets.right[j][i] * s).collect());
    }
    SpectralEmbedding {
        z,
        l,
        singular_values: triplets.values[..=l].to_vec(),
        n_rows,
        n_cols,
    }
}
