//! Truncated SVD: one-sided Jacobi for small problems, Golub-Kahan-Lanczos
//! with full reorthogonalization otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::AtomError;
use crate::matrix::DataMatrix;
use crate::scalar::{axpy, dot, norm, scale, Scalar};

/// A matrix that can be applied and transpose-applied to vectors.
pub trait LinearOperator<T> {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[T], y: &mut [T]);
    /// `y = A^T x`
    fn apply_t(&self, x: &[T], y: &mut [T]);
    /// Row-major dense copy.
    fn to_dense(&self) -> Vec<T>;
}

impl<T: Scalar> LinearOperator<T> for DataMatrix<T> {
    fn nrows(&self) -> usize {
        self.n_rows()
    }
    fn ncols(&self) -> usize {
        self.n_cols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.mul_vec(x, y)
    }
    fn apply_t(&self, x: &[T], y: &mut [T]) {
        self.mul_t_vec(x, y)
    }
    fn to_dense(&self) -> Vec<T> {
        self.to_dense_values()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    /// Cap on the Krylov dimension.
    pub max_iter: usize,
    /// Convergence tolerance on the change of each wanted singular value.
    pub value_tol: f64,
    /// Convergence tolerance on `||A^T u - sigma v||`.
    pub residual_tol: f64,
    /// Problems with `min(rows, cols)` at or below this use dense Jacobi.
    pub dense_cutoff: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            value_tol: 1e-8,
            residual_tol: 1e-9,
            dense_cutoff: 64,
        }
    }
}

/// Leading singular triplets in non-increasing order of singular value.
#[derive(Debug, Clone, Serialize)]
pub struct SvdTriplets<T> {
    pub values: Vec<T>,
    pub left: Vec<Vec<T>>,
    pub right: Vec<Vec<T>>,
    /// `||A^T u_i - sigma_i v_i||` per triplet (`A v_i = sigma_i u_i` holds by construction).
    pub residuals: Vec<f64>,
}

impl<T: Scalar> SvdTriplets<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn truncate(&mut self, n: usize) {
        self.values.truncate(n);
        self.left.truncate(n);
        self.right.truncate(n);
        self.residuals.truncate(n);
    }
}

/// The `count` leading singular triplets of `op`.
pub fn truncated_svd<T: Scalar, Op: LinearOperator<T>>(
    op: &Op,
    count: usize,
    opts: &SvdOptions,
    seed: u64,
) -> Result<SvdTriplets<T>, AtomError> {
    let mut t = deflated_svd(op, count, 0, &[], &[], opts, seed)?;
    t.truncate(count);
    Ok(t)
}

/// Leading triplets of `op` restricted to the orthogonal complement of the
/// locked singular pairs. Returns `count` triplets plus up to `extra` further
/// triplets that happened to converge as well.
pub(crate) fn deflated_svd<T: Scalar, Op: LinearOperator<T>>(
    op: &Op,
    count: usize,
    extra: usize,
    locked_left: &[Vec<T>],
    locked_right: &[Vec<T>],
    opts: &SvdOptions,
    seed: u64,
) -> Result<SvdTriplets<T>, AtomError> {
    let (rows, cols) = (op.nrows(), op.ncols());
    let available = rows.min(cols).saturating_sub(locked_left.len());
    if count > available {
        return Err(AtomError::TooManyTriplets {
            requested: count,
            available,
        });
    }
    let extra = extra.min(available - count);
    if count + extra == 0 {
        return Ok(SvdTriplets {
            values: vec![],
            left: vec![],
            right: vec![],
            residuals: vec![],
        });
    }
    if rows.min(cols) <= opts.dense_cutoff {
        dense_svd(op, count + extra, locked_left, locked_right)
    } else {
        lanczos_svd(op, count, extra, locked_left, locked_right, opts, seed)
    }
}

/// Removes the components along each (unit) basis vector, twice.
fn orthogonalize<T: Scalar>(x: &mut [T], bases: &[&[Vec<T>]]) {
    for _ in 0..2 {
        for basis in bases {
            for b in basis.iter() {
                let c = dot(b, x);
                axpy(-c, b, x);
            }
        }
    }
}

/// Random unit vector orthogonal to the given bases, or `None` when they
/// already span the space.
fn random_orthogonal<T: Scalar>(len: usize, bases: &[&[Vec<T>]], rng: &mut ChaCha8Rng) -> Option<Vec<T>> {
    for _ in 0..8 {
        let mut x: Vec<T> = (0..len).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect();
        orthogonalize(&mut x, bases);
        let nx = norm(&x);
        if nx > T::of(1e-3) {
            scale(T::one() / nx, &mut x);
            return Some(x);
        }
    }
    None
}

fn lanczos_svd<T: Scalar, Op: LinearOperator<T>>(
    op: &Op,
    count: usize,
    extra: usize,
    locked_left: &[Vec<T>],
    locked_right: &[Vec<T>],
    opts: &SvdOptions,
    seed: u64,
) -> Result<SvdTriplets<T>, AtomError> {
    let (rows, cols) = (op.nrows(), op.ncols());
    let space = rows.min(cols) - locked_left.len();
    let cap = space.min(opts.max_iter.max(count + 1));
    let residual_tol = opts.residual_tol.max(T::epsilon().as_f64() * 100.0);
    let breakdown = T::epsilon().sqrt() * T::of(1e-2);
    let first_check = space.min((2 * count).max(count + 8)).min(cap);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut left: Vec<Vec<T>> = Vec::new();
    let mut right: Vec<Vec<T>> = Vec::new();
    let mut alphas: Vec<T> = Vec::new();
    let mut betas: Vec<T> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;

    let v0 = random_orthogonal(cols, &[locked_right], &mut rng).ok_or(AtomError::Degenerate("no starting vector"))?;
    right.push(v0);
    let mut u = vec![T::zero(); rows];
    let mut w = vec![T::zero(); cols];

    loop {
        let j = alphas.len();
        op.apply(&right[j], &mut u);
        if j > 0 {
            axpy(-betas[j - 1], &left[j - 1], &mut u);
        }
        orthogonalize(&mut u, &[locked_left, &left]);
        let mut alpha = norm(&u);
        if alpha <= breakdown {
            alpha = T::zero();
            u = random_orthogonal(rows, &[locked_left, &left], &mut rng).ok_or(AtomError::Degenerate("left basis exhausted"))?;
        } else {
            scale(T::one() / alpha, &mut u);
        }
        alphas.push(alpha);
        left.push(u.clone());

        op.apply_t(&left[j], &mut w);
        axpy(-alpha, &right[j], &mut w);
        orthogonalize(&mut w, &[locked_right, &right]);
        let mut beta = norm(&w);
        let k = j + 1;

        let exhausted = k >= space;
        if k >= first_check && ((k - first_check).is_multiple_of(4) || k >= cap) || exhausted {
            // with the full space spanned the coupling term vanishes
            let coupling = if exhausted { T::zero() } else { beta };
            let (values, x, y) = bidiagonal_svd(&alphas, &betas);
            let residuals: Vec<f64> = (0..k).map(|i| (coupling * x[i][k - 1]).abs().as_f64()).collect();
            let vals: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
            let scale_ref = vals.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
            let settled = previous.as_ref().is_some_and(|p| {
                (0..count).all(|i| (p.get(i).copied().unwrap_or(f64::INFINITY) - vals[i]).abs() <= opts.value_tol * scale_ref)
            });
            let converged = (0..count).all(|i| residuals[i] <= residual_tol) && (settled || exhausted);
            let last_residual = (0..count).map(|i| residuals[i]).fold(0.0, f64::max);
            if converged {
                let mut n_out = count;
                while n_out < (count + extra).min(k) && residuals[n_out] <= residual_tol {
                    n_out += 1;
                }
                return Ok(ritz_triplets(&left, &right, &values, &x, &y, &residuals, n_out));
            }
            previous = Some(vals);
            if k >= cap {
                return Err(AtomError::Convergence {
                    iterations: k,
                    residual: last_residual,
                });
            }
        }
        if exhausted {
            unreachable!("an exhausted Krylov space always converges");
        }
        if beta <= breakdown {
            beta = T::zero();
            w = random_orthogonal(cols, &[locked_right, &right], &mut rng).ok_or(AtomError::Degenerate("right basis exhausted"))?;
        } else {
            scale(T::one() / beta, &mut w);
        }
        betas.push(beta);
        right.push(w.clone());
    }
}

fn ritz_triplets<T: Scalar>(
    left: &[Vec<T>],
    right: &[Vec<T>],
    values: &[T],
    x: &[Vec<T>],
    y: &[Vec<T>],
    residuals: &[f64],
    n_out: usize,
) -> SvdTriplets<T> {
    let combine = |basis: &[Vec<T>], coeffs: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); basis[0].len()];
        for (b, &c) in basis.iter().zip(coeffs) {
            axpy(c, b, &mut out);
        }
        out
    };
    let k = values.len();
    SvdTriplets {
        values: values[..n_out].to_vec(),
        left: (0..n_out).map(|i| combine(&left[..k], &x[i])).collect(),
        right: (0..n_out).map(|i| combine(&right[..k], &y[i])).collect(),
        residuals: residuals[..n_out].to_vec(),
    }
}

/// SVD of the upper bidiagonal matrix with diagonal `alphas` and
/// superdiagonal `betas`. Returns values and left/right singular vectors as
/// lists (vector `i` belongs to value `i`).
fn bidiagonal_svd<T: Scalar>(alphas: &[T], betas: &[T]) -> (Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>) {
    let k = alphas.len();
    let mut b = vec![T::zero(); k * k];
    for i in 0..k {
        b[i * k + i] = alphas[i];
        if i + 1 < k {
            b[i * k + i + 1] = betas[i];
        }
    }
    jacobi_svd(&b, k, k)
}

fn dense_svd<T: Scalar, Op: LinearOperator<T>>(
    op: &Op,
    wanted: usize,
    locked_left: &[Vec<T>],
    locked_right: &[Vec<T>],
) -> Result<SvdTriplets<T>, AtomError> {
    let (rows, cols) = (op.nrows(), op.ncols());
    let mut a = op.to_dense();
    // (I - U U^T) A (I - V V^T)
    for u in locked_left {
        let mut ut_a = vec![T::zero(); cols];
        for r in 0..rows {
            axpy(u[r], &a[r * cols..(r + 1) * cols], &mut ut_a);
        }
        for r in 0..rows {
            axpy(-u[r], &ut_a, &mut a[r * cols..(r + 1) * cols]);
        }
    }
    for v in locked_right {
        for r in 0..rows {
            let row = &mut a[r * cols..(r + 1) * cols];
            let c = dot(row, v);
            axpy(-c, v, row);
        }
    }
    let (values, mut left, right) = jacobi_svd(&a, rows, cols);
    let mut rng = ChaCha8Rng::seed_from_u64(0x0d15_ea5e);
    let tiny = T::small() * values.first().copied().unwrap_or(T::one()).max(T::one());
    // complete left vectors of zero singular values
    for i in 0..wanted {
        if values[i] <= tiny {
            let done: Vec<Vec<T>> = left[..i].to_vec();
            left[i] = random_orthogonal(rows, &[locked_left, &done], &mut rng).ok_or(AtomError::Degenerate("left basis exhausted"))?;
        }
    }
    let residuals = (0..wanted)
        .map(|i| {
            let mut w = vec![T::zero(); cols];
            op.apply_t(&left[i], &mut w);
            for v in locked_right {
                let c = dot(&w, v);
                axpy(-c, v, &mut w);
            }
            axpy(-values[i], &right[i], &mut w);
            norm(&w).as_f64()
        })
        .collect();
    Ok(SvdTriplets {
        values: values[..wanted].to_vec(),
        left: left[..wanted].to_vec(),
        right: right[..wanted].to_vec(),
        residuals,
    })
}

/// One-sided Jacobi SVD of a row-major `rows x cols` matrix. Returns
/// `min(rows, cols)` singular values in non-increasing order with their left
/// and right vectors. Left vectors of zero singular values are zero.
///
/// Tall problems are first reduced to their square triangular factor by a
/// Householder QR, so the rotations act on short vectors.
pub(crate) fn jacobi_svd<T: Scalar>(a: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<Vec<T>>, Vec<Vec<T>>) {
    // Orthogonalize the columns of G, the taller orientation of A.
    let transposed = rows < cols;
    let (len, n) = if transposed { (cols, rows) } else { (rows, cols) };
    let mut g: Vec<Vec<T>> = (0..n)
        .map(|j| {
            if transposed {
                a[j * cols..(j + 1) * cols].to_vec()
            } else {
                (0..rows).map(|r| a[r * cols + j]).collect()
            }
        })
        .collect();
    let reflectors = if len > n { Some(householder_qr(&mut g)) } else { None };
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[q], &g[q]);
                let gamma = dot(&g[p], &g[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(T, usize)> = g.iter().enumerate().map(|(j, col)| (norm(col), j)).collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let floor = T::small() * order.first().map_or(T::zero(), |o| o.0);
    let mut values = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for (sigma, j) in order {
        let mut col = g[j].clone();
        if sigma > floor && sigma > T::zero() {
            scale(T::one() / sigma, &mut col);
        } else {
            col.iter_mut().for_each(|x| *x = T::zero());
        }
        if let Some(refl) = &reflectors {
            col = apply_q(refl, &col, len);
        }
        let sigma = if sigma > floor { sigma } else { T::zero() };
        values.push(sigma);
        us.push(col);
        vs.push(v[j].clone());
    }
    debug_assert_eq!(us.first().map_or(len, Vec::len), len);
    if transposed {
        (values, vs, us)
    } else {
        (values, us, vs)
    }
}

/// Householder QR of the columns `g` (each of length `len > g.len()`).
/// Replaces `g` with the columns of the square factor R and returns the unit
/// reflector vectors; reflector `j` acts on coordinates `j..len`.
fn householder_qr<T: Scalar>(g: &mut [Vec<T>]) -> Vec<Vec<T>> {
    let n = g.len();
    let mut reflectors = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = g[j][j..].to_vec();
        let alpha = norm(&v);
        let beta = if v[0] >= T::zero() { -alpha } else { alpha };
        v[0] -= beta;
        let nv = norm(&v);
        if nv > T::zero() {
            scale(T::one() / nv, &mut v);
            for col in g[j..].iter_mut() {
                let c = T::of(2.0) * dot(&v, &col[j..]);
                axpy(-c, &v, &mut col[j..]);
            }
        } else {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
        reflectors.push(v);
    }
    for col in g.iter_mut() {
        col.truncate(n);
    }
    reflectors
}

/// `Q [y; 0]` for the Q of [`householder_qr`].
fn apply_q<T: Scalar>(reflectors: &[Vec<T>], y: &[T], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    out[..y.len()].copy_from_slice(y);
    for (j, v) in reflectors.iter().enumerate().rev() {
        let c = T::of(2.0) * dot(v, &out[j..]);
        axpy(-c, v, &mut out[j..]);
    }
    out
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let (gp, gq) = (&mut head[p], &mut tail[0]);
    for (x, y) in gp.iter_mut().zip(gq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::StorageKind;
    use crate::spectral::normalize;

    fn check_triplets(a: &DataMatrix<f64>, t: &SvdTriplets<f64>, tol: f64) {
        for i in 0..t.len() {
            let mut av = vec![0.0; a.n_rows()];
            a.mul_vec(&t.right[i], &mut av);
            let r: f64 = av.iter().zip(&t.left[i]).map(|(x, u)| (x - t.values[i] * u).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-6, "residual {r} for triplet {i}");
            if i > 0 {
                assert!(t.values[i] <= t.values[i - 1] + 1e-12);
            }
            for j in 0..=i {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&t.left[i], &t.left[j]) - expect).abs() <= tol);
                assert!((dot(&t.right[i], &t.right[j]) - expect).abs() <= tol);
            }
        }
    }

    #[test]
    fn two_component_block_has_double_unit_value() {
        let a = DataMatrix::dense(
            4,
            4,
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let n = normalize(&a).unwrap();
        let t: SvdTriplets<f64> = truncated_svd(&n.matrix, 3, &SvdOptions::default(), 1).unwrap();
        assert!((t.values[0] - 1.0).abs() < 1e-12);
        assert!((t.values[1] - 1.0).abs() < 1e-12);
        assert!(t.values[2].abs() < 1e-12);
        check_triplets(&n.matrix, &t, 1e-8);
    }

    #[test]
    fn rank_one_block() {
        let a = DataMatrix::dense(3, 3, vec![1.0; 9]).unwrap();
        let n = normalize(&a).unwrap();
        let t: SvdTriplets<f64> = truncated_svd(&n.matrix, 2, &SvdOptions::default(), 1).unwrap();
        assert!((t.values[0] - 1.0).abs() < 1e-12);
        assert!(t.values[1].abs() < 1e-12);
        check_triplets(&n.matrix, &t, 1e-8);
    }

    #[test]
    fn too_many_triplets() {
        let a = DataMatrix::dense(2, 3, vec![1.0; 6]).unwrap();
        assert!(matches!(
            truncated_svd(&a, 3, &SvdOptions::default(), 0),
            Err(AtomError::TooManyTriplets { requested: 3, available: 2 })
        ));
    }

    fn random_matrix(rows: usize, cols: usize, density: f64, seed: u64) -> DataMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if rng.gen::<f64>() < density {
                    trip.push((r, c, rng.gen_range(0.1..2.0)));
                }
            }
        }
        DataMatrix::from_triplets(rows, cols, trip).unwrap()
    }

    #[test]
    fn lanczos_agrees_with_jacobi() {
        let a = random_matrix(150, 90, 0.3, 5);
        let lanczos = truncated_svd(&a, 5, &SvdOptions::default(), 3).unwrap();
        let dense_opts = SvdOptions {
            dense_cutoff: usize::MAX,
            ..Default::default()
        };
        let dense = truncated_svd(&a, 5, &dense_opts, 3).unwrap();
        for i in 0..5 {
            assert!((lanczos.values[i] - dense.values[i]).abs() < 1e-9, "{i}: {} vs {}", lanczos.values[i], dense.values[i]);
        }
        check_triplets(&a, &lanczos, 1e-8);
        check_triplets(&a, &dense, 1e-8);
    }

    #[test]
    fn tall_thin_dense_path() {
        let a = random_matrix(400, 20, 0.5, 12);
        let t = truncated_svd(&a, 6, &SvdOptions::default(), 0).unwrap();
        check_triplets(&a, &t, 1e-8);
        let wide = a.transpose();
        let w = truncated_svd(&wide, 6, &SvdOptions::default(), 0).unwrap();
        check_triplets(&wide, &w, 1e-8);
        for i in 0..6 {
            assert!((t.values[i] - w.values[i]).abs() < 1e-12);
        }
        // every singular value: sum of squares equals the Frobenius norm
        let all = truncated_svd(&a, 20, &SvdOptions::default(), 0).unwrap();
        let fro: f64 = a.to_dense_values().iter().map(|x| x * x).sum();
        let ss: f64 = all.values.iter().map(|x| x * x).sum();
        assert!((fro - ss).abs() < 1e-9 * fro);
    }

    #[test]
    fn lanczos_on_dense_storage_and_f32() {
        let a = random_matrix(120, 100, 0.5, 8).to_storage(StorageKind::Dense);
        let t = truncated_svd(&a, 3, &SvdOptions::default(), 1).unwrap();
        check_triplets(&a, &t, 1e-8);
        let vals: Vec<f32> = a.to_dense_values().iter().map(|&x| x as f32).collect();
        let a32 = DataMatrix::<f32>::dense(120, 100, vals).unwrap();
        let t32 = truncated_svd(&a32, 3, &SvdOptions::default(), 1).unwrap();
        for i in 0..3 {
            assert!((t32.values[i] as f64 - t.values[i]).abs() < 1e-3 * t.values[0]);
        }
    }

    #[test]
    fn deflation_skips_locked_pair() {
        let a = random_matrix(100, 80, 0.4, 2);
        let n = normalize(&a).unwrap();
        let (u1, v1) = n.trivial_pair();
        let full = truncated_svd(&n.matrix, 4, &SvdOptions::default(), 9).unwrap();
        assert!((full.values[0] - 1.0).abs() < 1e-10);
        let defl = deflated_svd(&n.matrix, 3, 0, &[u1], &[v1], &SvdOptions::default(), 9).unwrap();
        for i in 0..3 {
            assert!((defl.values[i] - full.values[i + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_spectrum_is_fully_found() {
        // five disconnected all-ones blocks of 20x16
        let mut trip = Vec::new();
        for b in 0..5 {
            for r in 0..20 {
                for c in 0..16 {
                    trip.push((b * 20 + r, b * 16 + c, 1.0));
                }
            }
        }
        let a = DataMatrix::from_triplets(100, 80, trip).unwrap();
        let n = normalize(&a).unwrap();
        let (u1, v1) = n.trivial_pair();
        let t: SvdTriplets<f64> = deflated_svd(&n.matrix, 2, 3, &[u1], &[v1], &SvdOptions::default(), 4).unwrap();
        assert_eq!(t.len(), 5);
        for i in 0..4 {
            assert!((t.values[i] - 1.0).abs() < 1e-10, "value {i} = {}", t.values[i]);
        }
    }
}
