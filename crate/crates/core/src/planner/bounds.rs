//! Hypergeometric block-membership model and its exponential tail bounds.
//!
//! When `phi` of `M` rows are sampled into a block, the number of rows of a
//! co-cluster with `K` rows that land in it is hypergeometric. The planner
//! only ever consumes the exponential upper bounds; the exact PMF is here to
//! check them.

use statrs::function::gamma::ln_gamma;

use super::{CoClusterPrior, PlanError};
use crate::scalar::compensated_sum;

fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `P(X = observed)` for `X ~ Hypergeometric(population, successes, draws)`.
///
/// Values outside the support have probability 0.
pub fn hypergeom_pmf(population: u64, successes: u64, draws: u64, observed: u64) -> Result<f64, PlanError> {
    if successes > population || draws > population {
        return Err(PlanError::InvalidCounts(format!(
            "hypergeometric({population}, {successes}, {draws}) needs successes and draws <= population"
        )));
    }
    let failures = population - successes;
    let lo = draws.saturating_sub(failures);
    let hi = successes.min(draws);
    if observed < lo || observed > hi {
        return Ok(0.0);
    }
    let ln_p = ln_choose(successes, observed) + ln_choose(failures, draws - observed) - ln_choose(population, draws);
    Ok(ln_p.exp().min(1.0))
}

/// `P(X < threshold)`, summed with compensation.
pub fn hypergeom_cdf_below(population: u64, successes: u64, draws: u64, threshold: u64) -> Result<f64, PlanError> {
    let terms = (0..threshold.min(draws + 1))
        .map(|a| hypergeom_pmf(population, successes, draws, a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(compensated_sum(terms).min(1.0))
}

/// Margin `share - (threshold - 1) / block` between the expected fraction of
/// co-cluster members in a block and the detection threshold.
pub fn margin(share: f64, threshold: u64, block: u64) -> f64 {
    share - (threshold as f64 - 1.0) / block as f64
}

/// Upper bound `exp(-2 s^2 block)` on `P(X < threshold)`, or 1 when the
/// margin `s` is not positive.
pub fn tail_bound(share: f64, threshold: u64, block: u64) -> f64 {
    let s = margin(share, threshold, block);
    if s > 0.0 {
        (-2.0 * s * s * block as f64).exp()
    } else {
        1.0
    }
}

/// Row and column margins of a prior for blocks of `phi x psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub s: f64,
    pub t: f64,
}

impl Margins {
    pub fn new(prior: &CoClusterPrior, phi: u64, psi: u64, n_rows: u64, n_cols: u64) -> Self {
        Self {
            s: margin(prior.min_rows as f64 / n_rows as f64, prior.row_threshold as u64, phi),
            t: margin(prior.min_cols as f64 / n_cols as f64, prior.col_threshold as u64, psi),
        }
    }

    pub fn admissible(&self) -> bool {
        self.s > 0.0 && self.t > 0.0
    }
}

/// Bound on the probability that a block misses the co-cluster on both
/// axes: the product of the two tail bounds, or 1 for inadmissible margins.
pub fn block_failure_bound(prior: &CoClusterPrior, phi: u64, psi: u64, n_rows: u64, n_cols: u64) -> f64 {
    let margins = Margins::new(prior, phi, psi, n_rows, n_cols);
    if !margins.admissible() {
        return 1.0;
    }
    let rows = tail_bound(prior.min_rows as f64 / n_rows as f64, prior.row_threshold as u64, phi);
    let cols = tail_bound(prior.min_cols as f64 / n_cols as f64, prior.col_threshold as u64, psi);
    rows * cols
}

/// `phi m s^2 + psi n t^2` for a uniform grid, or `None` when inadmissible.
pub fn exponent_budget(prior: &CoClusterPrior, m: u64, n: u64, phi: u64, psi: u64, n_rows: u64, n_cols: u64) -> Option<f64> {
    let Margins { s, t } = Margins::new(prior, phi, psi, n_rows, n_cols);
    (s > 0.0 && t > 0.0).then_some(phi as f64 * m as f64 * s * s + psi as f64 * n as f64 * t * t)
}

/// Bound `exp(-2 (phi m s^2 + psi n t^2))` on the probability that one
/// sampling round misses the co-cluster in every block.
pub fn failure_probability_bound(prior: &CoClusterPrior, m: u64, n: u64, phi: u64, psi: u64, n_rows: u64, n_cols: u64) -> f64 {
    match exponent_budget(prior, m, n, phi, psi, n_rows, n_cols) {
        Some(budget) => (-2.0 * budget).exp(),
        None => 1.0,
    }
}

/// Lower bound `1 - exp(-2 rounds budget)` on detecting the co-cluster in at
/// least one of `rounds` independent rounds.
pub fn success_probability(rounds: u32, budget: f64) -> f64 {
    1.0 - (-2.0 * rounds as f64 * budget).exp()
}

/// Smallest `rounds >= 1` with `success_probability(rounds, budget) >= p_thresh`.
pub fn min_sampling_rounds(budget: f64, p_thresh: f64) -> Result<u32, PlanError> {
    if !(budget > 0.0) {
        return Err(PlanError::Inadmissible(format!(
            "inadmissible margins: exponent budget {budget} must be positive"
        )));
    }
    if !(0.0..1.0).contains(&p_thresh) {
        return Err(PlanError::UnreachableThreshold(p_thresh));
    }
    let estimate = ((1.0 - p_thresh).ln() / (-2.0 * budget)).ceil();
    let mut rounds = if estimate.is_finite() { estimate.clamp(1.0, u32::MAX as f64) as u32 } else { 1 };
    // The closed form can be off by one at the boundary; settle it with the
    // same predicate callers check against.
    while rounds > 1 && success_probability(rounds - 1, budget) >= p_thresh {
        rounds -= 1;
    }
    while success_probability(rounds, budget) < p_thresh {
        rounds = rounds.checked_add(1).ok_or(PlanError::UnreachableThreshold(p_thresh))?;
    }
    Ok(rounds)
}
