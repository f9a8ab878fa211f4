use lamc_core::matrix::{permute, BlockView, DataMatrix, PlantedGroundTruth, StorageKind};
use lamc_core::metrics::{ari, nmi};
use lamc_core::spectral::{cocluster_block, normalize, truncated_svd, AtomOptions, SvdOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_block(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DataMatrix<f64> {
    // every row and column gets at least one entry, so nothing is dropped
    let mut values = vec![0.0; rows * cols];
    for v in values.iter_mut() {
        if rng.gen::<f64>() < 0.6 {
            *v = rng.gen_range(0.1..3.0);
        }
    }
    for r in 0..rows {
        values[r * cols + r % cols] += 1.0;
    }
    for c in 0..cols {
        values[(c % rows) * cols + c] += 1.0;
    }
    DataMatrix::dense(rows, cols, values).unwrap()
}

/// Second eigenvector of `L z = lambda D z` for the bipartite graph of `a`,
/// returned as `D^{1/2} z` with unit norm, plus the gap to the third eigenvalue.
fn generalized_eigvec(a: &DataMatrix<f64>) -> (Vec<f64>, f64) {
    let (m, n) = a.shape();
    let size = m + n;
    let mut w = DMatrix::<f64>::zeros(size, size);
    for r in 0..m {
        for c in 0..n {
            let x = a.get(r, c);
            w[(r, m + c)] = x;
            w[(m + c, r)] = x;
        }
    }
    let d: Vec<f64> = (0..size).map(|i| w.row(i).sum()).collect();
    // D^{-1/2} (D - W) D^{-1/2}
    let mut l = DMatrix::<f64>::zeros(size, size);
    for i in 0..size {
        for j in 0..size {
            let lij = if i == j { d[i] - w[(i, j)] } else { -w[(i, j)] };
            l[(i, j)] = lij / (d[i] * d[j]).sqrt();
        }
    }
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let second = order[1];
    let gap = (eig.eigenvalues[order[2]] - eig.eigenvalues[second]).min(eig.eigenvalues[second] - eig.eigenvalues[order[0]]);
    (eig.eigenvectors.column(second).iter().copied().collect(), gap)
}

#[test]
fn second_singular_pair_is_the_generalized_eigenvector() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 20 {
        let (rows, cols) = (rng.gen_range(3..=20), rng.gen_range(3..=20));
        let a = random_block(rows, cols, &mut rng);
        let (y, gap) = generalized_eigvec(&a);
        if gap < 1e-4 {
            continue;
        }
        let normalized = normalize(&a).unwrap();
        let t = truncated_svd(&normalized.matrix, 2, &SvdOptions::default(), 3).unwrap();
        let mut stacked: Vec<f64> = t.left[1].iter().chain(&t.right[1]).copied().collect();
        let scale = stacked.iter().map(|x| x * x).sum::<f64>().sqrt();
        stacked.iter_mut().for_each(|x| *x /= scale);
        let sign = if stacked.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let err = stacked.iter().zip(&y).map(|(a, b)| (sign * a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6, "{rows}x{cols}: deviation {err:e}");
        checked += 1;
    }
}

fn labels_of(r: &lamc_core::spectral::BlockCoClusterResult) -> (Vec<usize>, Vec<usize>) {
    (
        r.row_labels.iter().map(|l| l.unwrap()).collect(),
        r.col_labels.iter().map(|l| l.unwrap()).collect(),
    )
}

#[test]
fn scaling_the_block_leaves_labels_unchanged() {
    let truth = PlantedGroundTruth::scattered(120, 90, &[40, 40, 40], &[30, 30, 30], 0.7, 0.05, 4).unwrap();
    let a: DataMatrix<f64> = truth.generate(120, 90, StorageKind::Dense).unwrap();
    let scaled = DataMatrix::dense(120, 90, a.to_dense_values().iter().map(|x| x * 4.0).collect()).unwrap();
    let n1 = normalize(&a).unwrap();
    let n4 = normalize(&scaled).unwrap();
    for (x, y) in n1.matrix.to_dense_values().iter().zip(n4.matrix.to_dense_values()) {
        assert!((x - y).abs() <= 1e-15);
    }
    let opts = AtomOptions::default();
    let r1 = cocluster_block(&BlockView::whole(&a), 3, 9, &opts).unwrap();
    let r4 = cocluster_block(&BlockView::whole(&scaled), 3, 9, &opts).unwrap();
    assert_eq!(labels_of(&r1), labels_of(&r4));
}

#[test]
fn permuting_rows_permutes_labels() {
    let truth = PlantedGroundTruth::scattered(100, 80, &[50, 50], &[40, 40], 0.8, 0.05, 2).unwrap();
    let a: DataMatrix<f64> = truth.generate(100, 80, StorageKind::Sparse).unwrap();
    let mut perm: Vec<usize> = (0..100).collect();
    perm.reverse();
    perm.swap(3, 70);
    let cols: Vec<usize> = (0..80).collect();
    let p = permute(&a, &perm, &cols).unwrap();
    let opts = AtomOptions::default();
    let (rows_a, cols_a) = labels_of(&cocluster_block(&BlockView::whole(&a), 2, 1, &opts).unwrap());
    let (rows_p, cols_p) = labels_of(&cocluster_block(&BlockView::whole(&p), 2, 1, &opts).unwrap());
    // identical up to cluster naming
    let moved: Vec<usize> = perm.iter().map(|&r| rows_a[r]).collect();
    assert_eq!(nmi(&moved, &rows_p).unwrap(), 1.0);
    assert_eq!(nmi(&cols_a, &cols_p).unwrap(), 1.0);
}

#[test]
fn components_are_reproduced_exactly() {
    for k in [2, 3, 5] {
        let rs = vec![12; k];
        let cs = vec![9; k];
        let truth = PlantedGroundTruth::scattered(12 * k, 9 * k, &rs, &cs, 1.0, 0.0, k as u64).unwrap();
        let a: DataMatrix<f64> = truth.generate(12 * k, 9 * k, StorageKind::Sparse).unwrap();
        let (tr, tc) = truth.truth_labels(12 * k, 9 * k).unwrap();
        let r = cocluster_block(&BlockView::whole(&a), k, 0, &AtomOptions::default()).unwrap();
        let (rows, cols) = labels_of(&r);
        assert!((ari(&rows, &tr).unwrap() - 1.0).abs() < 1e-12, "k = {k}");
        assert!((ari(&cols, &tc).unwrap() - 1.0).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn large_sparse_block_uses_lanczos_and_recovers_structure() {
    let truth = PlantedGroundTruth::scattered(600, 500, &[150; 4], &[125; 4], 0.4, 0.02, 8).unwrap();
    let a: DataMatrix<f64> = truth.generate(600, 500, StorageKind::Sparse).unwrap();
    let (tr, tc) = truth.truth_labels(600, 500).unwrap();
    let r = cocluster_block(&BlockView::whole(&a), 4, 5, &AtomOptions::default()).unwrap();
    let (rows, cols) = labels_of(&r);
    assert!(nmi(&rows, &tr).unwrap() > 0.99);
    assert!(nmi(&cols, &tc).unwrap() > 0.99);
    assert!((r.singular_values[0] - 1.0).abs() < 1e-8);
}

#[test]
fn f32_atom_matches_f64() {
    let truth = PlantedGroundTruth::scattered(200, 160, &[50; 4], &[40; 4], 1.0, 0.0, 3).unwrap();
    let a64: DataMatrix<f64> = truth.generate(200, 160, StorageKind::Sparse).unwrap();
    let a32: DataMatrix<f32> = truth.generate(200, 160, StorageKind::Sparse).unwrap();
    let opts = AtomOptions::default();
    let r64 = cocluster_block(&BlockView::whole(&a64), 4, 0, &opts).unwrap();
    let r32 = cocluster_block(&BlockView::whole(&a32), 4, 0, &opts).unwrap();
    let (r, _) = labels_of(&r64);
    let (s, _) = labels_of(&r32);
    assert_eq!(nmi(&r, &s).unwrap(), 1.0);
}
