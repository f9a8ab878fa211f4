//! End-to-end runs: plan, permute and partition, co-cluster every block in
//! parallel, merge, label and score.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{extract_permuted_blocks, load_dense_csv, load_matrix_market, BlockView, DataMatrix, MatrixError, StorageKind};
use crate::merge::{
    consensus_labels, hierarchical_merge, jaccard_product, lift_to_global, refine_candidates, CoCluster, LabelAssignment,
    LiftOptions, MergeTrace, RefineContext,
};
use crate::metrics::{cocluster_nmi, CoClusterScores, MetricError};
use crate::planner::{
    plan_for_grid, plan_partition, PartitionPlan, SolverCostModel, PlanError, PlannerOptions, PriorRequest,
};
use crate::scalar::Scalar;
use crate::seed::block_seed;
use crate::spectral::{cocluster_block, retained_pairs, AtomError, AtomOptions, BlockCoClusterResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("truth labels: {0}")]
    Truth(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error("every block failed: {0}")]
    AllBlocksFailed(String),
}

impl PipelineError {
    /// Process exit code: 2 configuration or planning, 3 input/output,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Plan(_) => 2,
            PipelineError::Matrix(_) | PipelineError::Io { .. } | PipelineError::Truth(_) => 3,
            PipelineError::Metric(_) => 2,
            PipelineError::Atom(e) if e.is_numerical() => 4,
            PipelineError::Atom(_) => 2,
            PipelineError::AllBlocksFailed(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Matrix Market, coordinate or array.
    Mtx,
    /// Dense CSV without a header.
    Csv,
    /// Dense CSV whose first line is a header.
    CsvHeader,
}

impl InputFormat {
    /// Guess from the file extension; anything but `.csv` is Matrix Market.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Mtx,
        }
    }
}

/// Minimum co-cluster size as fractions of the matrix plus optional
/// detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub row_fraction: f64,
    pub col_fraction: f64,
    pub row_threshold: Option<usize>,
    pub col_threshold: Option<usize>,
}

impl PriorSpec {
    pub fn resolve(&self, n_rows: usize, n_cols: usize) -> Result<PriorRequest, PlanError> {
        PriorRequest::from_fractions(n_rows, n_cols, self.row_fraction, self.col_fraction, self.row_threshold, self.col_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub k: usize,
    pub priors: Vec<PriorSpec>,
    pub p_thresh: f64,
    pub workers: usize,
    pub root_seed: u64,
    pub tau: f64,
    /// Merge iteration cap; defaults to the candidate count.
    pub merge_cap: Option<usize>,
    /// Fixed `m x n` grid instead of the planner's choice.
    pub grid: Option<(usize, usize)>,
    pub min_rounds: u32,
    pub mean_factor: f64,
    pub refine_iterations: usize,
    pub output: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, k: usize) -> Self {
        let input = input.into();
        Self {
            format: InputFormat::from_path(&input),
            input,
            k,
            priors: vec![PriorSpec {
                row_fraction: 0.1,
                col_fraction: 0.1,
                row_threshold: None,
                col_threshold: None,
            }],
            p_thresh: 0.95,
            workers: 1,
            root_seed: 0,
            tau: 0.5,
            merge_cap: None,
            grid: None,
            min_rounds: 1,
            mean_factor: 1.5,
            refine_iterations: 2,
            output: None,
            truth: None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.p_thresh) {
            return fail(format!("p_thresh must lie in [0, 1), got {}", self.p_thresh));
        }
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.merge_cap == Some(0) {
            return fail("merge cap must be at least 1".into());
        }
        if self.priors.is_empty() {
            return fail("at least one co-cluster prior is required".into());
        }
        if !(self.mean_factor.is_finite() && self.mean_factor >= 0.0) {
            return fail(format!("mean factor must be finite and nonnegative, got {}", self.mean_factor));
        }
        Ok(())
    }

    fn planner_options(&self) -> PlannerOptions {
        PlannerOptions {
            workers: self.workers,
            root_seed: self.root_seed,
            min_rounds: self.min_rounds,
            ..Default::default()
        }
    }
}

/// Ground-truth labels: `{row_labels, col_labels, background?}`. Label
/// `background`, if given, marks rows and columns outside every co-cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLabels {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    #[serde(default)]
    pub background: Option<usize>,
}

impl TruthLabels {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Truth(format!("{}: {e}", path.display())))
    }

    pub fn assignment(&self) -> LabelAssignment {
        let count = |l: &[usize]| l.iter().collect::<BTreeSet<_>>().len();
        LabelAssignment {
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
            k: count(&self.row_labels),
            d: count(&self.col_labels),
        }
    }

    /// The planted co-clusters: every non-background label owning at least
    /// one row and one column.
    pub fn coclusters(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let ids: BTreeSet<usize> = self.row_labels.iter().copied().filter(|&l| Some(l) != self.background).collect();
        ids.into_iter()
            .filter_map(|id| {
                let pick = |ls: &[usize]| -> Vec<usize> { ls.iter().enumerate().filter(|(_, &l)| l == id).map(|(i, _)| i).collect() };
                let (r, c) = (pick(&self.row_labels), pick(&self.col_labels));
                (!r.is_empty() && !c.is_empty()).then_some((r, c))
            })
            .collect()
    }
}

/// Outcome of one (round, block) task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockOutcome {
    pub round: u32,
    pub block_row: usize,
    pub block_col: usize,
    pub rows: usize,
    pub cols: usize,
    /// `ok`, `empty` or `failed`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalCoCluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub score: f64,
    pub provenance_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub planted: usize,
    pub detected: usize,
    pub rate: f64,
    /// Best Jaccard product reached for each planted co-cluster.
    pub best_match: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub scores: CoClusterScores,
    pub nmi_normalization: &'static str,
    pub detection: Detection,
}

/// Wall-clock measurements, kept apart from the deterministic content.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub plan_seconds: f64,
    pub blocks_seconds: f64,
    pub merge_seconds: f64,
    pub total_seconds: f64,
    /// Per task, in task order.
    pub block_seconds: Vec<f64>,
    /// Busy time per worker thread.
    pub worker_busy_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub plan: PartitionPlan,
    pub k: usize,
    pub tau: f64,
    pub workers: usize,
    pub root_seed: u64,
    pub blocks: Vec<BlockOutcome>,
    pub peak_candidates: usize,
    pub merge_trace: MergeTrace,
    pub coclusters: Vec<FinalCoCluster>,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub n_row_clusters: usize,
    pub n_col_clusters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    pub timings: Timings,
}

impl RunReport {
    pub fn labels(&self) -> LabelAssignment {
        LabelAssignment {
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
            k: self.n_row_clusters,
            d: self.n_col_clusters,
        }
    }

    /// The report with every timing zeroed, for comparing runs.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: Timings::default(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Writes the report through a temporary file in the target directory
    /// and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<(), PipelineError> {
        let io = |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        std::io::Write::write_all(&mut tmp, self.to_json().as_bytes()).map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }
}

pub fn load_input<T: Scalar>(path: &Path, format: InputFormat) -> Result<DataMatrix<T>, PipelineError> {
    Ok(match format {
        InputFormat::Mtx => load_matrix_market(path)?,
        InputFormat::Csv => load_dense_csv(path, false)?,
        InputFormat::CsvHeader => load_dense_csv(path, true)?,
    })
}

/// Loads the input and truth named in `config`, runs, and writes the report
/// if an output path is set.
pub fn run(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let matrix: DataMatrix<f64> = load_input(&config.input, config.format)?;
    let truth = config.truth.as_deref().map(TruthLabels::load).transpose()?;
    let report = run_on_matrix(&matrix, config, truth.as_ref())?;
    if let Some(out) = &config.output {
        report.write_atomic(out)?;
    }
    Ok(report)
}

/// Plans the partition for `matrix` under `config`.
pub fn plan<T: Scalar>(matrix: &DataMatrix<T>, config: &PipelineConfig) -> Result<PartitionPlan, PipelineError> {
    config.validate()?;
    let (m, n) = matrix.shape();
    let priors = config.priors.iter().map(|p| p.resolve(m, n)).collect::<Result<Vec<_>, _>>()?;
    let plan = match config.grid {
        Some((gm, gn)) => plan_for_grid(m, n, gm, gn, &priors, config.p_thresh, config.planner_options())?,
        None => plan_partition(m, n, &priors, config.p_thresh, &solver_cost(matrix, config, &priors)?, config.planner_options())?,
    };
    Ok(plan)
}

/// Cost model for the atom as implemented, with the lift and refine work of
/// one block (about `k` candidates, each re-fitted against the full matrix)
/// charged per block.
fn solver_cost<T: Scalar>(matrix: &DataMatrix<T>, config: &PipelineConfig, priors: &[PriorRequest]) -> Result<SolverCostModel, PipelineError> {
    let (m, n) = matrix.shape();
    let density = matrix.nnz() as f64 / (m as f64 * n as f64);
    let min_rows = priors.iter().map(|p| p.min_rows).min().unwrap_or(1) as f64;
    let min_cols = priors.iter().map(|p| p.min_cols).min().unwrap_or(1) as f64;
    let passes = (2 * config.refine_iterations + 1) as f64;
    let scan = match matrix.storage_kind() {
        StorageKind::Dense => 1.0,
        StorageKind::Sparse => density,
    };
    Ok(SolverCostModel {
        density: scan,
        k: config.k,
        embed_dim: retained_pairs(config.k)?,
        dense_cutoff: AtomOptions::default().svd.dense_cutoff,
        per_block: config.k as f64 * passes * 0.5 * (min_rows * n as f64 + min_cols * m as f64) * scan,
    })
}

fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

struct TaskResult {
    outcome: BlockOutcome,
    candidates: Vec<CoCluster>,
    seconds: f64,
    worker: usize,
}

/// Runs the pipeline on an in-memory matrix.
pub fn run_on_matrix<T: Scalar>(
    matrix: &DataMatrix<T>,
    config: &PipelineConfig,
    truth: Option<&TruthLabels>,
) -> Result<RunReport, PipelineError> {
    let start = Instant::now();
    let plan = plan(matrix, config)?;
    let plan_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "plan: {}x{} grid of blocks up to {}x{}, {} round(s), success bound {:.4}",
        plan.m,
        plan.n,
        plan.phi,
        plan.psi,
        plan.rounds,
        plan.success_bound
    );
    if let Some(t) = truth {
        if t.row_labels.len() != matrix.n_rows() || t.col_labels.len() != matrix.n_cols() {
            return Err(PipelineError::Truth(format!(
                "truth has {} row and {} column labels for a {}x{} matrix",
                t.row_labels.len(),
                t.col_labels.len(),
                matrix.n_rows(),
                matrix.n_cols()
            )));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start {} workers: {e}", config.workers)))?;

    let atom_opts = AtomOptions::default();
    let blocks_start = Instant::now();
    let (blocks, timings_blocks, merged, trace, labels, peak) = if plan.is_monolithic() {
        let t0 = Instant::now();
        let view = BlockView::whole(matrix);
        let result = cocluster_block(&view, config.k, block_seed(config.root_seed, 0, 0, 0), &atom_opts)?;
        let seconds = t0.elapsed().as_secs_f64();
        let (merged, labels) = monolithic_labels(matrix, &result);
        let outcome = BlockOutcome {
            round: 0,
            block_row: 0,
            block_col: 0,
            rows: matrix.n_rows(),
            cols: matrix.n_cols(),
            status: "ok".into(),
            message: None,
            candidates: merged.len(),
        };
        let trace = MergeTrace {
            iterations: vec![],
            stopped_reason: crate::merge::StopReason::ThresholdExhausted,
        };
        (vec![outcome], (vec![seconds], vec![seconds]), merged, trace, labels, 0)
    } else {
        let transpose = matrix.transpose();
        let refine_ctx = RefineContext::new(matrix, &transpose);
        let grid = plan.grid();
        let lift = LiftOptions {
            row_threshold: plan.row_threshold,
            col_threshold: plan.col_threshold,
            mean_factor: config.mean_factor,
        };
        let mut tasks: Vec<(u32, BlockView<'_, T>)> = Vec::new();
        let mut orders = Vec::new();
        for (round, &(rs, cs)) in plan.perm_seeds.iter().enumerate() {
            orders.push((round as u32, permutation(matrix.n_rows(), rs), permutation(matrix.n_cols(), cs)));
        }
        for (round, rows, cols) in &orders {
            for view in extract_permuted_blocks(matrix, &grid, rows, cols)? {
                tasks.push((*round, view));
            }
        }
        let results: Vec<TaskResult> = pool.install(|| {
            tasks
                .par_iter()
                .map(|(round, view)| {
                    let t0 = Instant::now();
                    let (i, j) = view.coords();
                    let seed = block_seed(config.root_seed, *round as usize, i, j);
                    let (status, message, candidates) = match cocluster_block(view, config.k, seed, &atom_opts) {
                        Ok(result) => {
                            let atom_seconds = t0.elapsed().as_secs_f64();
                            let lifted = lift_to_global(&result, view, *round, &lift);
                            let refined = refine_candidates(lifted, &refine_ctx, &lift, config.refine_iterations);
                            log::debug!(
                                "round {round} block ({i}, {j}): atom {atom_seconds:.4}s, lift {:.4}s, {} candidates",
                                t0.elapsed().as_secs_f64() - atom_seconds,
                                refined.len()
                            );
                            ("ok", None, refined)
                        }
                        Err(AtomError::EmptyBlock) => ("empty", None, vec![]),
                        Err(e) => {
                            log::warn!("round {round} block ({i}, {j}) skipped: {e}");
                            ("failed", Some(e.to_string()), vec![])
                        }
                    };
                    let (rows, cols) = view.shape();
                    TaskResult {
                        outcome: BlockOutcome {
                            round: *round,
                            block_row: i,
                            block_col: j,
                            rows,
                            cols,
                            status: status.into(),
                            message,
                            candidates: candidates.len(),
                        },
                        candidates,
                        seconds: t0.elapsed().as_secs_f64(),
                        worker: rayon::current_thread_index().unwrap_or(0),
                    }
                })
                .collect()
        });
        if results.iter().all(|r| r.outcome.status == "failed") {
            let msg = results[0].outcome.message.clone().unwrap_or_default();
            return Err(PipelineError::AllBlocksFailed(msg));
        }
        let mut busy = vec![0.0; config.workers];
        for r in &results {
            busy[r.worker.min(config.workers - 1)] += r.seconds;
        }
        let block_seconds = results.iter().map(|r| r.seconds).collect();
        let mut candidates = Vec::new();
        let mut outcomes = Vec::new();
        for r in results {
            candidates.extend(r.candidates);
            outcomes.push(r.outcome);
        }
        let peak = candidates.len();
        let cap = config.merge_cap.unwrap_or(peak.max(1));
        let (merged, trace) = hierarchical_merge(candidates, config.tau, cap);
        let (merged, labels) = settle(merged, matrix.n_rows(), matrix.n_cols());
        (outcomes, (block_seconds, busy), merged, trace, labels, peak)
    };
    let blocks_seconds = blocks_start.elapsed().as_secs_f64();

    let merge_start = Instant::now();
    let coclusters = final_coclusters(matrix, &merged, &labels);
    let metrics = truth.map(|t| score(&labels, &coclusters, t)).transpose()?;
    let merge_seconds = merge_start.elapsed().as_secs_f64();
    Ok(RunReport {
        k: config.k,
        tau: config.tau,
        workers: config.workers,
        root_seed: config.root_seed,
        blocks,
        peak_candidates: peak,
        merge_trace: trace,
        coclusters,
        row_labels: labels.row_labels,
        col_labels: labels.col_labels,
        n_row_clusters: labels.k,
        n_col_clusters: labels.d,
        metrics,
        timings: Timings {
            plan_seconds,
            blocks_seconds,
            merge_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
            block_seconds: timings_blocks.0,
            worker_busy_seconds: timings_blocks.1,
        },
        plan,
    })
}

/// Labels of a single whole-matrix atom run: atom cluster ids as they are,
/// dropped rows and columns on the extra label `k`.
fn monolithic_labels<T: Scalar>(matrix: &DataMatrix<T>, result: &BlockCoClusterResult) -> (Vec<CoCluster>, LabelAssignment) {
    let bg = result.k;
    let labels = LabelAssignment {
        row_labels: result.row_labels.iter().map(|l| l.unwrap_or(bg)).collect(),
        col_labels: result.col_labels.iter().map(|l| l.unwrap_or(bg)).collect(),
        k: bg + 1,
        d: bg + 1,
    };
    let origin = crate::merge::Origin {
        round: 0,
        block_row: 0,
        block_col: 0,
    };
    let merged = (0..bg)
        .map(|id| {
            let (rows, cols) = labels.group(id);
            let score = submatrix_mean(matrix, &rows, &cols);
            CoCluster::new(rows, cols, origin, score)
        })
        .collect();
    (merged, labels)
}

/// Consensus labeling that only keeps co-clusters winning at least one row
/// and one column, so every non-background label is in use.
fn settle(mut merged: Vec<CoCluster>, n_rows: usize, n_cols: usize) -> (Vec<CoCluster>, LabelAssignment) {
    loop {
        let labels = consensus_labels(&merged, n_rows, n_cols);
        let mut has_row = vec![false; merged.len()];
        let mut has_col = vec![false; merged.len()];
        for &l in &labels.row_labels {
            if l < merged.len() {
                has_row[l] = true;
            }
        }
        for &l in &labels.col_labels {
            if l < merged.len() {
                has_col[l] = true;
            }
        }
        if has_row.iter().zip(&has_col).all(|(&r, &c)| r && c) {
            return (merged, labels);
        }
        let mut id = 0;
        merged.retain(|_| {
            let keep = has_row[id] && has_col[id];
            id += 1;
            keep
        });
    }
}

fn submatrix_mean<T: Scalar>(matrix: &DataMatrix<T>, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let mut acc = vec![0.0; matrix.n_cols()];
    matrix.accumulate_rows(rows, &mut acc);
    cols.iter().map(|&c| acc[c]).sum::<f64>() / (rows.len() * cols.len()) as f64
}

/// The disjoint co-clusters formed by each non-background label.
fn final_coclusters<T: Scalar>(matrix: &DataMatrix<T>, merged: &[CoCluster], labels: &LabelAssignment) -> Vec<FinalCoCluster> {
    merged
        .iter()
        .enumerate()
        .filter_map(|(id, c)| {
            let (rows, cols) = labels.group(id);
            if rows.is_empty() || cols.is_empty() {
                return None;
            }
            let score = submatrix_mean(matrix, &rows, &cols);
            Some(FinalCoCluster {
                rows,
                cols,
                score,
                provenance_count: c.provenance.len(),
            })
        })
        .collect()
}

/// Detection threshold on the Jaccard product with a planted co-cluster.
pub const DETECTION_THRESHOLD: f64 = 0.8;

fn score(labels: &LabelAssignment, found: &[FinalCoCluster], truth: &TruthLabels) -> Result<MetricsReport, PipelineError> {
    let scores = cocluster_nmi(labels, &truth.assignment())?;
    let planted = truth.coclusters();
    let best_match: Vec<f64> = planted
        .iter()
        .map(|(r, c)| found.iter().map(|f| jaccard_product(r, c, &f.rows, &f.cols)).fold(0.0, f64::max))
        .collect();
    let detected = best_match.iter().filter(|&&b| b >= DETECTION_THRESHOLD).count();
    Ok(MetricsReport {
        scores,
        nmi_normalization: "geometric",
        detection: Detection {
            planted: planted.len(),
            detected,
            rate: if planted.is_empty() { 1.0 } else { detected as f64 / planted.len() as f64 },
            best_match,
        },
    })
}

/// One benchmark configuration: worker count and optional fixed grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub workers: usize,
    pub grid: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub workers: usize,
    pub m: usize,
    pub n: usize,
    pub rounds: u32,
    pub seconds: Vec<f64>,
    pub median_seconds: f64,
    /// Baseline median over this case's median.
    pub speedup: f64,
    /// This case's median over the baseline median.
    pub time_ratio: f64,
    pub row_nmi_vs_baseline: f64,
    pub col_nmi_vs_baseline: f64,
    /// Scores against the truth labels, when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<CoClusterScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub baseline_seconds: Vec<f64>,
    pub baseline_median_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_truth: Option<CoClusterScores>,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("workers,m,n,rounds,median_seconds,speedup,time_ratio,row_nmi_vs_baseline,col_nmi_vs_baseline\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.4},{:.4},{:.6},{:.6}\n",
                r.workers, r.m, r.n, r.rounds, r.median_seconds, r.speedup, r.time_ratio, r.row_nmi_vs_baseline, r.col_nmi_vs_baseline
            ));
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times every case `repetitions` times against the monolithic baseline
/// (one block, one worker). A case identical to the baseline reuses its
/// measurements, so its ratio is exactly 1.
pub fn benchmark<T: Scalar>(
    matrix: &DataMatrix<T>,
    base: &PipelineConfig,
    cases: &[BenchCase],
    repetitions: usize,
    truth: Option<&TruthLabels>,
) -> Result<BenchTable, PipelineError> {
    let reps = repetitions.max(1);
    let time = |cfg: &PipelineConfig| -> Result<(Vec<f64>, RunReport), PipelineError> {
        let mut seconds = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let t0 = Instant::now();
            let report = run_on_matrix(matrix, cfg, truth)?;
            seconds.push(t0.elapsed().as_secs_f64());
            last = Some(report);
        }
        Ok((seconds, last.expect("at least one repetition")))
    };
    let baseline_cfg = PipelineConfig {
        workers: 1,
        grid: Some((1, 1)),
        output: None,
        ..base.clone()
    };
    let (baseline_seconds, baseline) = time(&baseline_cfg)?;
    let baseline_median = median(&baseline_seconds);
    let mut rows = Vec::new();
    for case in cases {
        let cfg = PipelineConfig {
            workers: case.workers,
            grid: case.grid,
            output: None,
            ..base.clone()
        };
        let (seconds, report) = if cfg == baseline_cfg {
            (baseline_seconds.clone(), baseline.clone())
        } else {
            time(&cfg)?
        };
        let med = median(&seconds);
        let vs = cocluster_nmi(&report.labels(), &baseline.labels())?;
        rows.push(BenchRow {
            workers: case.workers,
            m: report.plan.m,
            n: report.plan.n,
            rounds: report.plan.rounds,
            seconds,
            median_seconds: med,
            speedup: baseline_median / med,
            time_ratio: med / baseline_median,
            row_nmi_vs_baseline: vs.row_nmi,
            col_nmi_vs_baseline: vs.col_nmi,
            truth: report.metrics.map(|m| m.scores),
        });
    }
    Ok(BenchTable {
        baseline_seconds,
        baseline_median_seconds: baseline_median,
        baseline_truth: baseline.metrics.map(|m| m.scores),
        rows,
    })
}

/// Convenience for callers holding a planted specification.
pub fn truth_from_planted(spec: &crate::matrix::PlantedSpec) -> Result<TruthLabels, MatrixError> {
    let (row_labels, col_labels) = spec.truth.truth_labels(spec.n_rows, spec.n_cols)?;
    Ok(TruthLabels {
        row_labels,
        col_labels,
        background: Some(spec.truth.coclusters.len()),
    })
}

/// Storage that suits a planted matrix of the given density.
pub fn storage_for_density(density: f64) -> StorageKind {
    if density < 0.1 {
        StorageKind::Sparse
    } else {
        StorageKind::Dense
    }
}
