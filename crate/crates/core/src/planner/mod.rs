//! Block-grid planning from the co-cluster detection bounds.

pub mod bounds;

pub use bounds::{
    block_failure_bound, exponent_budget, failure_probability_bound, hypergeom_cdf_below, hypergeom_pmf, margin,
    min_sampling_rounds, success_probability, tail_bound, Margins,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{Grid, StorageKind};
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("{0}")]
    Inadmissible(String),
    #[error("unreachable threshold: p_thresh = {0} must lie in [0, 1)")]
    UnreachableThreshold(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Smallest co-cluster the plan must be able to find, with the number of
/// its rows and columns a block needs to contain for detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoClusterPrior {
    pub min_rows: usize,
    pub min_cols: usize,
    pub row_threshold: usize,
    pub col_threshold: usize,
}

impl CoClusterPrior {
    pub fn validate(&self, n_rows: usize, n_cols: usize) -> Result<(), PlanError> {
        // A threshold above the co-cluster size is well formed but can never
        // be met; the planner reports it as inadmissible.
        let ok_rows = 1 <= self.row_threshold && 1 <= self.min_rows && self.min_rows <= n_rows;
        let ok_cols = 1 <= self.col_threshold && 1 <= self.min_cols && self.min_cols <= n_cols;
        if ok_rows && ok_cols {
            Ok(())
        } else {
            Err(PlanError::InvalidPrior(format!(
                "need T_m, T_n >= 1, 1 <= min_rows <= {n_rows} and 1 <= min_cols <= {n_cols}, got {self:?}"
            )))
        }
    }
}

/// A prior whose thresholds may be left to the default rule, which depends
/// on the block size: `max(3, ceil(0.1 * phi * min_rows / M))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorRequest {
    pub min_rows: usize,
    pub min_cols: usize,
    #[serde(default)]
    pub row_threshold: Option<usize>,
    #[serde(default)]
    pub col_threshold: Option<usize>,
}

impl PriorRequest {
    /// Prior from minimum co-cluster fractions of the matrix dimensions.
    pub fn from_fractions(
        n_rows: usize,
        n_cols: usize,
        row_fraction: f64,
        col_fraction: f64,
        row_threshold: Option<usize>,
        col_threshold: Option<usize>,
    ) -> Result<Self, PlanError> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !frac_ok(row_fraction) || !frac_ok(col_fraction) {
            return Err(PlanError::InvalidPrior(format!(
                "co-cluster fractions must lie in (0, 1], got {row_fraction} and {col_fraction}"
            )));
        }
        Ok(Self {
            min_rows: ((row_fraction * n_rows as f64).ceil() as usize).clamp(1, n_rows),
            min_cols: ((col_fraction * n_cols as f64).ceil() as usize).clamp(1, n_cols),
            row_threshold,
            col_threshold,
        })
    }

    pub fn resolve(&self, phi: usize, psi: usize, n_rows: usize, n_cols: usize) -> CoClusterPrior {
        let default = |block: usize, min: usize, total: usize| -> usize {
            let auto = (0.1 * block as f64 * min as f64 / total as f64).ceil() as usize;
            auto.max(3).min(min.max(1))
        };
        CoClusterPrior {
            min_rows: self.min_rows,
            min_cols: self.min_cols,
            row_threshold: self.row_threshold.unwrap_or_else(|| default(phi, self.min_rows, n_rows)),
            col_threshold: self.col_threshold.unwrap_or_else(|| default(psi, self.min_cols, n_cols)),
        }
    }
}

/// Estimated cost of one atom run on a `phi x psi` block.
pub trait CostModel {
    fn atom_cost(&self, phi: usize, psi: usize) -> f64;
}

impl<F: Fn(usize, usize) -> f64> CostModel for F {
    fn atom_cost(&self, phi: usize, psi: usize) -> f64 {
        self(phi, psi)
    }
}

/// `phi * psi * (l + 1)` for sparse input, `phi * psi * min(phi, psi)` for
/// dense input, where `l` is the embedding width.
#[derive(Debug, Clone, Copy)]
pub struct AtomCostModel {
    pub storage: StorageKind,
    pub embed_dim: usize,
}

impl CostModel for AtomCostModel {
    fn atom_cost(&self, phi: usize, psi: usize) -> f64 {
        let area = phi as f64 * psi as f64;
        match self.storage {
            StorageKind::Sparse => area * (self.embed_dim + 1) as f64,
            StorageKind::Dense => area * phi.min(psi) as f64,
        }
    }
}

/// Cost of the atom as implemented: a full dense SVD (`phi psi min(phi, psi)`)
/// for blocks at or below the dense cutoff, otherwise Lanczos with a Krylov
/// space of a few vectors per wanted pair, plus k-means on the embedding and
/// a fixed per-block charge for lifting and refining candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverCostModel {
    /// Stored fraction of the cells (1 for dense storage).
    pub density: f64,
    pub k: usize,
    pub embed_dim: usize,
    pub dense_cutoff: usize,
    pub per_block: f64,
}

impl SolverCostModel {
    /// Krylov steps expected for `embed_dim + 1` wanted pairs.
    fn krylov_steps(&self) -> f64 {
        (2 * (self.embed_dim + 1) + 8) as f64
    }
}

impl CostModel for SolverCostModel {
    fn atom_cost(&self, phi: usize, psi: usize) -> f64 {
        let (p, q) = (phi as f64, psi as f64);
        let svd = if phi.min(psi) <= self.dense_cutoff {
            p * q * p.min(q)
        } else {
            let steps = self.krylov_steps();
            2.0 * steps * p * q * self.density + steps * steps * (p + q)
        };
        let kmeans = (p + q) * (self.k * self.embed_dim.max(1)) as f64 * 200.0;
        svd + kmeans + self.per_block
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PartitionPlan {
    pub n_rows: usize,
    pub n_cols: usize,
    pub m: usize,
    pub n: usize,
    /// Largest row block size, `ceil(M / m)`.
    pub phi: usize,
    /// Largest column block size, `ceil(N / n)`.
    pub psi: usize,
    pub rounds: u32,
    /// Row and column permutation seeds, one pair per round.
    pub perm_seeds: Vec<(u64, u64)>,
    pub failure_bound: f64,
    pub success_bound: f64,
    pub p_thresh: f64,
    /// Detection thresholds used when lifting block results.
    pub row_threshold: usize,
    pub col_threshold: usize,
}

impl PartitionPlan {
    pub fn grid(&self) -> Grid {
        Grid::balanced(self.n_rows, self.m, self.n_cols, self.n).expect("plan grid fits its matrix")
    }

    /// A single block covering the whole matrix. Further rounds would only
    /// permute that block, so they add nothing.
    pub fn is_monolithic(&self) -> bool {
        self.m == 1 && self.n == 1
    }
}

#[derive(Debug, Clone, Copy)]
struct Evaluation {
    rounds: u32,
    failure: f64,
    budget: f64,
    row_threshold: usize,
    col_threshold: usize,
}

/// Tightest margin seen on an inadmissible grid, for error reporting.
#[derive(Debug, Clone, Copy)]
struct Violation {
    m: usize,
    n: usize,
    prior: CoClusterPrior,
    margins: Margins,
}

fn evaluate(
    n_rows: usize,
    n_cols: usize,
    m: usize,
    n: usize,
    priors: &[PriorRequest],
    p_thresh: f64,
) -> Result<Result<Evaluation, Violation>, PlanError> {
    // Bounds use the smallest blocks of the balanced split.
    let phi = n_rows / m;
    let psi = n_cols / n;
    let mut worst: Option<Evaluation> = None;
    let mut row_threshold = usize::MAX;
    let mut col_threshold = usize::MAX;
    for req in priors {
        let prior = req.resolve(phi, psi, n_rows, n_cols);
        prior.validate(n_rows, n_cols)?;
        row_threshold = row_threshold.min(prior.row_threshold);
        col_threshold = col_threshold.min(prior.col_threshold);
        let (mu, nu, p, q, r, c) = (m as u64, n as u64, phi as u64, psi as u64, n_rows as u64, n_cols as u64);
        let Some(budget) = exponent_budget(&prior, mu, nu, p, q, r, c) else {
            return Ok(Err(Violation {
                m,
                n,
                prior,
                margins: Margins::new(&prior, p, q, r, c),
            }));
        };
        let rounds = min_sampling_rounds(budget, p_thresh)?;
        let failure = failure_probability_bound(&prior, mu, nu, p, q, r, c);
        let eval = Evaluation {
            rounds,
            failure,
            budget,
            row_threshold: 0,
            col_threshold: 0,
        };
        if worst.is_none_or(|w| budget < w.budget) {
            worst = Some(eval);
        }
    }
    let mut eval = worst.ok_or_else(|| PlanError::InvalidPrior("at least one prior is required".into()))?;
    eval.row_threshold = row_threshold;
    eval.col_threshold = col_threshold;
    Ok(Ok(eval))
}

fn build_plan(
    n_rows: usize,
    n_cols: usize,
    m: usize,
    n: usize,
    eval: Evaluation,
    min_rounds: u32,
    p_thresh: f64,
    root_seed: u64,
) -> PartitionPlan {
    let rounds = eval.rounds.max(min_rounds);
    let perm_seeds = (0..rounds as u64)
        .map(|r| (derive_seed(root_seed, &[0, r, 0]), derive_seed(root_seed, &[0, r, 1])))
        .collect();
    PartitionPlan {
        n_rows,
        n_cols,
        m,
        n,
        phi: n_rows.div_ceil(m),
        psi: n_cols.div_ceil(n),
        rounds,
        perm_seeds,
        failure_bound: eval.failure,
        success_bound: success_probability(rounds, eval.budget),
        p_thresh,
        row_threshold: eval.row_threshold,
        col_threshold: eval.col_threshold,
    }
}

fn check_inputs(n_rows: usize, n_cols: usize, p_thresh: f64, workers: usize) -> Result<(), PlanError> {
    if n_rows == 0 || n_cols == 0 {
        return Err(PlanError::InvalidGrid("matrix must be at least 1x1".into()));
    }
    if !(0.0..1.0).contains(&p_thresh) {
        return Err(PlanError::UnreachableThreshold(p_thresh));
    }
    if workers == 0 {
        return Err(PlanError::InvalidGrid("workers must be at least 1".into()));
    }
    Ok(())
}

/// Grid sizes tried along one axis: powers of two, multiples of the worker
/// count and divisors of the dimension, all capped at `cap`.
pub fn candidate_counts(dim: usize, workers: usize, cap: usize) -> Vec<usize> {
    let limit = cap.min(dim).max(1);
    let mut out: Vec<usize> = (0..)
        .map(|p| 1usize << p)
        .take_while(|&x| x <= limit)
        .chain((1..).map(|k| k * workers).take_while(|&x| x <= limit))
        .chain((1..=limit).filter(|&d| dim.is_multiple_of(d)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Options for [`plan_partition`].
#[derive(Debug, Clone, Copy)]
pub struct PlannerOptions {
    pub workers: usize,
    pub root_seed: u64,
    /// Largest number of blocks along either axis.
    pub max_blocks_per_axis: usize,
    /// Lower bound on the number of rounds (the bound may ask for more).
    pub min_rounds: u32,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            root_seed: 0,
            max_blocks_per_axis: 64,
            min_rounds: 1,
        }
    }
}

/// Chooses the uniform grid with the lowest estimated wall time
/// `rounds * ceil(m n / workers) * atom_cost(phi, psi)` among grids whose
/// margins are positive for every prior. Ties go to the smaller `(m, n)`.
pub fn plan_partition(
    n_rows: usize,
    n_cols: usize,
    priors: &[PriorRequest],
    p_thresh: f64,
    cost: &dyn CostModel,
    options: PlannerOptions,
) -> Result<PartitionPlan, PlanError> {
    check_inputs(n_rows, n_cols, p_thresh, options.workers)?;
    let mut best: Option<(f64, usize, usize, Evaluation)> = None;
    let mut tightest: Option<Violation> = None;
    for m in candidate_counts(n_rows, options.workers, options.max_blocks_per_axis) {
        for n in candidate_counts(n_cols, options.workers, options.max_blocks_per_axis) {
            match evaluate(n_rows, n_cols, m, n, priors, p_thresh)? {
                Ok(eval) => {
                    let rounds = eval.rounds.max(options.min_rounds);
                    let waves = (m * n).div_ceil(options.workers);
                    let estimate = rounds as f64 * waves as f64 * cost.atom_cost(n_rows.div_ceil(m), n_cols.div_ceil(n));
                    let better = match &best {
                        None => true,
                        Some((c, bm, bn, _)) => estimate.total_cmp(c).then((m, n).cmp(&(*bm, *bn))).is_lt(),
                    };
                    if better {
                        best = Some((estimate, m, n, eval));
                    }
                }
                Err(v) => {
                    let slack = |v: &Violation| v.margins.s.min(v.margins.t);
                    if tightest.is_none_or(|t| slack(&v) > slack(&t)) {
                        tightest = Some(v);
                    }
                }
            }
        }
    }
    match best {
        Some((_, m, n, eval)) => Ok(build_plan(n_rows, n_cols, m, n, eval, options.min_rounds, p_thresh, options.root_seed)),
        None => {
            let v = tightest.expect("at least the 1x1 grid is evaluated");
            Err(PlanError::Inadmissible(format!(
                "no admissible grid: the closest candidate {}x{} has margins s = {:.6}, t = {:.6} for prior \
                 (min_rows {}, min_cols {}, T_m {}, T_n {}); both must be positive",
                v.m, v.n, v.margins.s, v.margins.t, v.prior.min_rows, v.prior.min_cols, v.prior.row_threshold, v.prior.col_threshold
            )))
        }
    }
}

/// Plan for a fixed `m x n` grid, still sizing the rounds from the bound.
pub fn plan_for_grid(
    n_rows: usize,
    n_cols: usize,
    m: usize,
    n: usize,
    priors: &[PriorRequest],
    p_thresh: f64,
    options: PlannerOptions,
) -> Result<PartitionPlan, PlanError> {
    check_inputs(n_rows, n_cols, p_thresh, options.workers)?;
    if m == 0 || n == 0 || m > n_rows || n > n_cols {
        return Err(PlanError::InvalidGrid(format!("a {m}x{n} grid does not fit a {n_rows}x{n_cols} matrix")));
    }
    match evaluate(n_rows, n_cols, m, n, priors, p_thresh)? {
        Ok(eval) => Ok(build_plan(n_rows, n_cols, m, n, eval, options.min_rounds, p_thresh, options.root_seed)),
        Err(v) => Err(PlanError::Inadmissible(format!(
            "grid {m}x{n} is inadmissible: margins s = {:.6}, t = {:.6} must both be positive",
            v.margins.s, v.margins.t
        ))),
    }
}
