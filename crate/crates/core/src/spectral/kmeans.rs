//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AtomError;
use crate::scalar::Scalar;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Cluster id per point, in `0..k`.
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after every Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| (x.as_f64() - c).powi(2)).sum()
}

/// Nearest centroid, ties toward the lowest id.
fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<T: Scalar>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let to_f64 = |p: &[T]| p.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    let mut centroids = vec![to_f64(&points[rng.gen_range(0..points.len())])];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        let c = to_f64(&points[pick]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd<T: Scalar>(points: &[Vec<T>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansResult {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut inertia = f64::INFINITY;
    for _ in 0..max_iter {
        let mut changed = false;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        inertia = dists.iter().sum();
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x.as_f64();
            }
        }
        // an emptied cluster takes over the point farthest from its centroid
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| !taken[i] && counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken[i] = true;
                    let from = labels[i];
                    counts[from] -= 1;
                    for (s, x) in sums[from].iter_mut().zip(&points[i]) {
                        *s -= x.as_f64();
                    }
                    sums[c] = points[i].iter().map(|x| x.as_f64()).collect();
                    counts[c] = 1;
                    dists[i] = 0.0;
                } else {
                    log::warn!("k-means: fewer distinct points than clusters");
                }
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    // final assignment against the final centroids
    let mut final_inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centroids);
        labels[i] = c;
        final_inertia += d;
    }
    if final_inertia < inertia || history.is_empty() {
        history.push(final_inertia);
    }
    KMeansResult {
        labels,
        inertia: final_inertia,
        centroids,
        history,
    }
}

/// Clusters `points` into `min(k, points.len())` groups. Deterministic for a
/// fixed seed; the restart with the lowest inertia wins (earliest on ties).
pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansResult, AtomError> {
    if k == 0 {
        return Err(AtomError::InvalidK(k));
    }
    if points.is_empty() {
        return Err(AtomError::EmptyBlock);
    }
    if points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(AtomError::Degenerate("non-finite embedding coordinate"));
    }
    let k = k.min(points.len());
    let mut best: Option<KMeansResult> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[restart as u64]));
        let init = plus_plus(points, k, &mut rng);
        let result = lloyd(points, init, opts.max_iter.max(1));
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
