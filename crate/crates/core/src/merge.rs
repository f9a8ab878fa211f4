//! Lifting block co-clusters to global indices, merging them across blocks
//! and rounds, and resolving overlaps into one labeling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::matrix::{BlockView, DataMatrix, Storage};
use crate::scalar::Scalar;
use crate::spectral::BlockCoClusterResult;

/// The block a candidate was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub round: u32,
    pub block_row: u32,
    pub block_col: u32,
}

/// A set of global rows and columns. Row and column lists are sorted and
/// carry a vote count each: how many merged candidates claimed that index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoCluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    #[serde(skip)]
    pub row_votes: Vec<u32>,
    #[serde(skip)]
    pub col_votes: Vec<u32>,
    pub provenance: Vec<Origin>,
    /// Mean matrix value over `rows x cols`.
    pub score: f64,
}

impl CoCluster {
    /// A single-origin co-cluster; `rows` and `cols` need not be sorted.
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>, origin: Origin, score: f64) -> Self {
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        Self {
            row_votes: vec![1; rows.len()],
            col_votes: vec![1; cols.len()],
            rows,
            cols,
            provenance: vec![origin],
            score,
        }
    }

    pub fn cells(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Union of both co-clusters with votes added.
    pub fn union(&self, other: &CoCluster) -> CoCluster {
        let (rows, row_votes) = merge_votes(&self.rows, &self.row_votes, &other.rows, &other.row_votes);
        let (cols, col_votes) = merge_votes(&self.cols, &self.col_votes, &other.cols, &other.col_votes);
        let mut provenance: Vec<Origin> = self.provenance.iter().chain(&other.provenance).copied().collect();
        provenance.sort_unstable();
        provenance.dedup();
        let (wa, wb) = (self.provenance.len() as f64, other.provenance.len() as f64);
        CoCluster {
            rows,
            cols,
            row_votes,
            col_votes,
            provenance,
            score: (self.score * wa + other.score * wb) / (wa + wb),
        }
    }

    fn order_key(&self, other: &Self) -> Ordering {
        other
            .cells()
            .cmp(&self.cells())
            .then_with(|| self.rows.cmp(&other.rows))
            .then_with(|| self.cols.cmp(&other.cols))
    }
}

fn merge_votes(a: &[usize], va: &[u32], b: &[usize], vb: &[u32]) -> (Vec<usize>, Vec<u32>) {
    let mut ids = Vec::with_capacity(a.len() + b.len());
    let mut votes = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                ids.push(x);
                votes.push(va[i] + vb[j]);
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                ids.push(x);
                votes.push(va[i]);
                i += 1;
            }
            (Some(_), Some(&y)) | (None, Some(&y)) => {
                ids.push(y);
                votes.push(vb[j]);
                j += 1;
            }
            (Some(&x), None) => {
                ids.push(x);
                votes.push(va[i]);
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (ids, votes)
}

fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let inter = intersection_len(a, b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Product of the row-set and column-set Jaccard indices.
pub fn similarity(a: &CoCluster, b: &CoCluster) -> f64 {
    jaccard(&a.rows, &b.rows) * jaccard(&a.cols, &b.cols)
}

/// Same measure on bare index sets (sorted).
pub fn jaccard_product(rows_a: &[usize], cols_a: &[usize], rows_b: &[usize], cols_b: &[usize]) -> f64 {
    jaccard(rows_a, rows_b) * jaccard(cols_a, cols_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftOptions {
    pub row_threshold: usize,
    pub col_threshold: usize,
    /// Keep a label pair only if its mean exceeds this multiple of the block mean.
    pub mean_factor: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            row_threshold: 1,
            col_threshold: 1,
            mean_factor: 1.5,
        }
    }
}

/// Turns one block result into global co-cluster candidates, one per
/// (row cluster, column cluster) pair that is large enough and denser than
/// the block as a whole.
pub fn lift_to_global<T: Scalar>(
    result: &BlockCoClusterResult,
    block: &BlockView<'_, T>,
    round: u32,
    opts: &LiftOptions,
) -> Vec<CoCluster> {
    let k = result.k;
    let mut row_groups = vec![Vec::new(); k];
    let mut col_groups = vec![Vec::new(); k];
    for (i, l) in result.row_labels.iter().enumerate() {
        if let Some(l) = *l {
            row_groups[l].push(i);
        }
    }
    for (j, l) in result.col_labels.iter().enumerate() {
        if let Some(l) = *l {
            col_groups[l].push(j);
        }
    }
    let sums = label_pair_sums(result, block);
    let (phi, psi) = block.shape();
    let block_mean = sums.iter().flatten().sum::<f64>() / (phi * psi) as f64;
    let (bi, bj) = block.coords();
    let origin = Origin {
        round,
        block_row: bi as u32,
        block_col: bj as u32,
    };
    let mut out = Vec::new();
    for a in 0..k {
        if row_groups[a].len() < opts.row_threshold || row_groups[a].is_empty() {
            continue;
        }
        for b in 0..k {
            if col_groups[b].len() < opts.col_threshold || col_groups[b].is_empty() {
                continue;
            }
            let mean = sums[a][b] / (row_groups[a].len() * col_groups[b].len()) as f64;
            if mean > opts.mean_factor * block_mean {
                let rows = row_groups[a].iter().map(|&i| block.row_span()[i]).collect();
                let cols = col_groups[b].iter().map(|&j| block.col_span()[j]).collect();
                out.push(CoCluster::new(rows, cols, origin, mean));
            }
        }
    }
    out
}

/// Sum of the block's entries per (row label, column label).
fn label_pair_sums<T: Scalar>(result: &BlockCoClusterResult, block: &BlockView<'_, T>) -> Vec<Vec<f64>> {
    let k = result.k;
    let mut sums = vec![vec![0.0; k]; k];
    let parent = block.parent();
    match parent.storage() {
        Storage::Dense(_) => {
            for (i, &r) in block.row_span().iter().enumerate() {
                let Some(a) = result.row_labels[i] else { continue };
                for (j, &c) in block.col_span().iter().enumerate() {
                    if let Some(b) = result.col_labels[j] {
                        sums[a][b] += parent.get(r, c).as_f64();
                    }
                }
            }
        }
        Storage::Sparse(_) => {
            let mut col_label = vec![None; parent.n_cols()];
            for (j, &c) in block.col_span().iter().enumerate() {
                col_label[c] = result.col_labels[j];
            }
            for (i, &r) in block.row_span().iter().enumerate() {
                let Some(a) = result.row_labels[i] else { continue };
                parent.for_each_in_row(r, |c, v| {
                    if let Some(b) = col_label[c] {
                        sums[a][b] += v.as_f64();
                    }
                });
            }
        }
    }
    sums
}

/// The full matrix, its transpose and its mean, shared by every refinement.
#[derive(Debug, Clone, Copy)]
pub struct RefineContext<'a, T> {
    pub matrix: &'a DataMatrix<T>,
    pub transpose: &'a DataMatrix<T>,
    pub global_mean: f64,
}

impl<'a, T: Scalar> RefineContext<'a, T> {
    pub fn new(matrix: &'a DataMatrix<T>, transpose: &'a DataMatrix<T>) -> Self {
        let (m, n) = matrix.shape();
        Self {
            matrix,
            transpose,
            global_mean: matrix.total() / (m * n) as f64,
        }
    }
}

/// Grows or trims each candidate against the full matrix.
///
/// A block only sees the part of a co-cluster that fell inside it, so the
/// pieces from different blocks barely overlap. Each candidate is therefore
/// re-fitted: columns whose mean over the candidate rows reaches the midpoint
/// between the candidate's density and the global density are taken, then
/// rows likewise over those columns. Candidates that end up below the size
/// thresholds are dropped.
pub fn refine_candidates<T: Scalar>(
    candidates: Vec<CoCluster>,
    ctx: &RefineContext<'_, T>,
    opts: &LiftOptions,
    iterations: usize,
) -> Vec<CoCluster> {
    let RefineContext {
        matrix,
        transpose,
        global_mean,
    } = *ctx;
    let (m, n) = matrix.shape();
    let mut col_acc = vec![0.0; n];
    let mut row_acc = vec![0.0; m];
    let mut out = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let theta = 0.5 * (cand.score + global_mean);
        let mut rows = cand.rows.clone();
        let mut cols = cand.cols.clone();
        for _ in 0..iterations {
            col_acc.iter_mut().for_each(|x| *x = 0.0);
            matrix.accumulate_rows(&rows, &mut col_acc);
            cols = (0..n).filter(|&c| col_acc[c] / rows.len() as f64 >= theta).collect();
            if cols.is_empty() {
                break;
            }
            row_acc.iter_mut().for_each(|x| *x = 0.0);
            transpose.accumulate_rows(&cols, &mut row_acc);
            rows = (0..m).filter(|&r| row_acc[r] / cols.len() as f64 >= theta).collect();
            if rows.is_empty() {
                break;
            }
        }
        if rows.len() < opts.row_threshold.max(1) || cols.len() < opts.col_threshold.max(1) {
            continue;
        }
        col_acc.iter_mut().for_each(|x| *x = 0.0);
        matrix.accumulate_rows(&rows, &mut col_acc);
        let mass: f64 = cols.iter().map(|&c| col_acc[c]).sum();
        let score = mass / (rows.len() * cols.len()) as f64;
        out.push(CoCluster::new(rows, cols, cand.provenance[0], score));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ThresholdExhausted,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeStep {
    /// Ids of the merged pair. Inputs are numbered `0..n` in order and each
    /// merge result takes the next free id.
    pub pair: (usize, usize),
    pub similarity: f64,
    pub result: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeTrace {
    pub iterations: Vec<MergeStep>,
    pub stopped_reason: StopReason,
}

#[derive(PartialEq)]
struct Candidate {
    sim: f64,
    a: usize,
    b: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on similarity; ties prefer the lower pair of ids
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy agglomeration: merges the most similar pair while its similarity
/// is at least `tau`, for at most `cap` merges. Output is sorted by cell
/// count (descending), then by row and column lists.
pub fn hierarchical_merge(candidates: Vec<CoCluster>, tau: f64, cap: usize) -> (Vec<CoCluster>, MergeTrace) {
    let mut pool: Vec<Option<CoCluster>> = candidates.into_iter().map(Some).collect();
    let mut heap = BinaryHeap::new();
    for a in 0..pool.len() {
        for b in a + 1..pool.len() {
            let sim = similarity(pool[a].as_ref().unwrap(), pool[b].as_ref().unwrap());
            if sim >= tau {
                heap.push(Candidate { sim, a, b });
            }
        }
    }
    let mut steps = Vec::new();
    let mut stopped_reason = StopReason::ThresholdExhausted;
    while let Some(Candidate { sim, a, b }) = heap.pop() {
        if pool[a].is_none() || pool[b].is_none() {
            continue;
        }
        if steps.len() >= cap {
            stopped_reason = StopReason::IterationCap;
            break;
        }
        let merged = pool[a].take().unwrap().union(&pool[b].take().unwrap());
        let id = pool.len();
        for (other, c) in pool.iter().enumerate() {
            if let Some(c) = c {
                let s = similarity(c, &merged);
                if s >= tau {
                    heap.push(Candidate { sim: s, a: other, b: id });
                }
            }
        }
        pool.push(Some(merged));
        steps.push(MergeStep {
            pair: (a, b),
            similarity: sim,
            result: id,
        });
    }
    let mut out: Vec<CoCluster> = pool.into_iter().flatten().collect();
    out.sort_by(|x, y| x.order_key(y));
    (
        out,
        MergeTrace {
            iterations: steps,
            stopped_reason,
        },
    )
}

/// One label per row and per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub k: usize,
    pub d: usize,
}

impl LabelAssignment {
    /// Rows and columns sharing label `id`.
    pub fn group(&self, id: usize) -> (Vec<usize>, Vec<usize>) {
        let pick = |labels: &[usize]| labels.iter().enumerate().filter(|(_, &l)| l == id).map(|(i, _)| i).collect();
        (pick(&self.row_labels), pick(&self.col_labels))
    }
}

/// Assigns every row and column to the merged co-cluster holding the most
/// votes for it (ties: higher score, then lower index). Unclaimed indices get
/// the background label `merged.len()`.
pub fn consensus_labels(merged: &[CoCluster], n_rows: usize, n_cols: usize) -> LabelAssignment {
    let background = merged.len();
    let resolve = |len: usize, pick: &dyn Fn(&CoCluster) -> (&[usize], &[u32])| -> Vec<usize> {
        let mut best: Vec<Option<(u32, f64, usize)>> = vec![None; len];
        for (id, c) in merged.iter().enumerate() {
            let (ids, votes) = pick(c);
            for (&i, &v) in ids.iter().zip(votes) {
                let better = match best[i] {
                    None => true,
                    Some((bv, bs, _)) => v > bv || (v == bv && c.score > bs),
                };
                if better {
                    best[i] = Some((v, c.score, id));
                }
            }
        }
        best.into_iter().map(|b| b.map_or(background, |(_, _, id)| id)).collect()
    };
    LabelAssignment {
        row_labels: resolve(n_rows, &|c| (&c.rows, &c.row_votes)),
        col_labels: resolve(n_cols, &|c| (&c.cols, &c.col_votes)),
        k: background + 1,
        d: background + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin(round: u32) -> Origin {
        Origin {
            round,
            block_row: 0,
            block_col: 0,
        }
    }

    fn cc(rows: &[usize], cols: &[usize], round: u32) -> CoCluster {
        CoCluster::new(rows.to_vec(), cols.to_vec(), origin(round), 1.0)
    }

    #[test]
    fn similarity_examples() {
        let a = cc(&[1, 2], &[1, 2], 0);
        assert_eq!(similarity(&a, &a), 1.0);
        assert_eq!(similarity(&a, &cc(&[3, 4], &[1, 2], 0)), 0.0);
        let b = cc(&[2, 3], &[1, 2], 0);
        assert!((similarity(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_pair_merges_once() {
        let (out, trace) = hierarchical_merge(vec![cc(&[1, 2], &[3], 0), cc(&[1, 2], &[3], 1)], 0.5, 10);
        assert_eq!(out.len(), 1);
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(out[0].row_votes, vec![2, 2]);
        assert_eq!(out[0].provenance.len(), 2);
    }

    #[test]
    fn disjoint_candidates_pass_through() {
        let input = vec![cc(&[0, 1], &[0], 0), cc(&[2], &[1], 0), cc(&[3, 4, 5], &[2, 3], 0)];
        let (out, trace) = hierarchical_merge(input.clone(), 0.5, 10);
        assert!(trace.iterations.is_empty());
        assert_eq!(trace.stopped_reason, StopReason::ThresholdExhausted);
        assert_eq!(out[0], input[2]);
        assert_eq!(out[1], input[0]);
        assert_eq!(out[2], input[1]);
    }

    #[test]
    fn three_rounds_of_one_cocluster() {
        let base: Vec<usize> = (0..50).collect();
        let a = cc(&base[..45], &base[..40], 0);
        let b = cc(&base[2..47], &base[1..41], 1);
        let c = cc(&base[5..50], &base[..42], 2);
        assert!(similarity(&a, &b) >= 0.8 && similarity(&b, &c) >= 0.7);
        let (out, trace) = hierarchical_merge(vec![a.clone(), b.clone(), c.clone()], 0.5, 3);
        assert_eq!(out.len(), 1);
        assert_eq!(trace.iterations.len(), 2);
        for x in [&a, &b, &c] {
            assert!(x.rows.iter().all(|r| out[0].rows.contains(r)));
        }
    }

    #[test]
    fn cap_stops_merging() {
        let (out, trace) = hierarchical_merge(vec![cc(&[1], &[1], 0), cc(&[1], &[1], 1), cc(&[1], &[1], 2)], 0.5, 1);
        assert_eq!(out.len(), 2);
        assert_eq!(trace.stopped_reason, StopReason::IterationCap);
    }

    #[test]
    fn consensus_examples() {
        let mut strong = cc(&[0, 1], &[0], 0);
        strong.row_votes = vec![3, 3];
        let weak = cc(&[1, 2], &[1], 1);
        let labels = consensus_labels(&[strong, weak], 4, 3);
        assert_eq!(labels.row_labels, vec![0, 0, 1, 2]);
        assert_eq!(labels.col_labels, vec![0, 1, 2]);
        assert_eq!((labels.k, labels.d), (3, 3));
        let full = consensus_labels(&[cc(&[0, 1], &[0], 0), cc(&[2], &[1, 2], 0)], 3, 3);
        assert!(full.row_labels.iter().chain(&full.col_labels).all(|&l| l < 2));
    }

    #[test]
    fn score_breaks_vote_ties() {
        let mut a = cc(&[0], &[0], 0);
        a.score = 0.2;
        let mut b = cc(&[0], &[1], 1);
        b.score = 0.9;
        assert_eq!(consensus_labels(&[a, b], 1, 2).row_labels, vec![1]);
    }

    #[test]
    fn lift_translates_and_filters() {
        // 4x4 with a dense 2x2 corner; block spans are global ids
        let m = DataMatrix::dense(
            4,
            4,
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 0.0],
        )
        .unwrap();
        let grid = crate::matrix::Grid::new(vec![4], vec![4]).unwrap();
        let views = crate::matrix::extract_permuted_blocks(&m, &grid, &[2, 0, 3, 1], &[0, 2, 1, 3]).unwrap();
        let result = BlockCoClusterResult {
            // local rows 1, 3 are global 0, 1
            row_labels: vec![Some(1), Some(0), Some(1), Some(0)],
            col_labels: vec![Some(0), Some(1), Some(0), Some(1)],
            k: 2,
            inertia: 0.0,
            dropped_rows: vec![],
            dropped_cols: vec![],
            singular_values: vec![],
        };
        let opts = LiftOptions {
            row_threshold: 2,
            col_threshold: 2,
            mean_factor: 1.5,
        };
        let out = lift_to_global(&result, &views[0], 3, &opts);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].rows, vec![0, 1]);
        assert_eq!(out[0].cols, vec![0, 1]);
        assert_eq!(out[0].score, 1.0);
        assert_eq!(out[0].provenance[0].round, 3);
        let strict = LiftOptions { row_threshold: 3, ..opts };
        assert!(lift_to_global(&result, &views[0], 0, &strict).is_empty());
        let sparse = m.to_storage(crate::matrix::StorageKind::Sparse);
        let sv = crate::matrix::extract_permuted_blocks(&sparse, &grid, &[2, 0, 3, 1], &[0, 2, 1, 3]).unwrap();
        assert_eq!(lift_to_global(&result, &sv[0], 3, &opts), out);
    }

    #[test]
    fn refine_recovers_whole_cocluster_from_piece() {
        let mut trip = Vec::new();
        for r in 0..10 {
            for c in 0..8 {
                trip.push((r, c, 1.0));
            }
        }
        trip.push((15, 15, 1.0));
        let m = DataMatrix::from_triplets(20, 20, trip).unwrap();
        let t = m.transpose();
        let piece = cc(&[1, 3, 4], &[2, 5], 0);
        let out = refine_candidates(vec![piece], &RefineContext::new(&m, &t), &LiftOptions::default(), 2);
        assert_eq!(out[0].rows, (0..10).collect::<Vec<_>>());
        assert_eq!(out[0].cols, (0..8).collect::<Vec<_>>());
        assert_eq!(out[0].score, 1.0);
    }

    fn arb_cocluster() -> impl Strategy<Value = CoCluster> {
        (
            proptest::collection::btree_set(0usize..30, 1..12),
            proptest::collection::btree_set(0usize..30, 1..12),
            0u32..4,
        )
            .prop_map(|(r, c, round)| CoCluster::new(r.into_iter().collect(), c.into_iter().collect(), origin(round), 1.0))
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric(a in arb_cocluster(), b in arb_cocluster()) {
            prop_assert_eq!(similarity(&a, &b), similarity(&b, &a));
            let same = a.rows == b.rows && a.cols == b.cols;
            prop_assert_eq!(similarity(&a, &b) == 1.0, same);
        }

        #[test]
        fn merge_is_idempotent_and_keeps_coverage(cands in proptest::collection::vec(arb_cocluster(), 1..20), tau in 0.05f64..1.0) {
            let cap = cands.len();
            let (once, _) = hierarchical_merge(cands.clone(), tau, cap);
            let (twice, trace) = hierarchical_merge(once.clone(), tau, cap);
            prop_assert!(trace.iterations.is_empty());
            prop_assert_eq!(&once, &twice);
            for c in &cands {
                for &r in &c.rows {
                    for &col in &c.cols {
                        prop_assert!(once.iter().any(|o| o.rows.binary_search(&r).is_ok() && o.cols.binary_search(&col).is_ok()));
                    }
                }
            }
        }

        #[test]
        fn consensus_labels_every_index(cands in proptest::collection::vec(arb_cocluster(), 0..10)) {
            let labels = consensus_labels(&cands, 30, 30);
            prop_assert_eq!(labels.row_labels.len(), 30);
            prop_assert!(labels.row_labels.iter().chain(&labels.col_labels).all(|&l| l < labels.k));
        }

        #[test]
        fn merge_is_deterministic(cands in proptest::collection::vec(arb_cocluster(), 1..15)) {
            let a = hierarchical_merge(cands.clone(), 0.3, cands.len());
            let b = hierarchical_merge(cands, 0.3, 15);
            prop_assert_eq!(a, b);
        }
    }
}
