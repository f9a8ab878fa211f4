use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataMatrix, MatrixError, StorageKind};
use crate::scalar::Scalar;

/// One planted co-cluster. `signal` is the probability that a cell inside it
/// is 1; background cells are 1 with probability `noise_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCoCluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub signal: f64,
}

/// Disjoint block-diagonal co-clusters plus Bernoulli background noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedGroundTruth {
    pub coclusters: Vec<PlantedCoCluster>,
    pub noise_rate: f64,
    pub seed: u64,
}

/// The planted-truth JSON document: `{M, N, coclusters, noise_rate, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    #[serde(rename = "M")]
    pub n_rows: usize,
    #[serde(rename = "N")]
    pub n_cols: usize,
    #[serde(flatten)]
    pub truth: PlantedGroundTruth,
}

impl PlantedSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, MatrixError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn generate<T: Scalar>(&self, kind: StorageKind) -> Result<DataMatrix<T>, MatrixError> {
        self.truth.generate(self.n_rows, self.n_cols, kind)
    }
}

fn owners<'a>(len: usize, sets: impl Iterator<Item = (usize, &'a [usize])>, axis: &str) -> Result<Vec<Option<usize>>, MatrixError> {
    let mut owner = vec![None; len];
    for (k, set) in sets {
        if set.is_empty() {
            return Err(MatrixError::Planted(format!("co-cluster {k} has no {axis}s")));
        }
        for &i in set {
            let slot = owner
                .get_mut(i)
                .ok_or_else(|| MatrixError::Planted(format!("{axis} {i} out of range 0..{len}")))?;
            if let Some(prev) = slot.replace(k) {
                return Err(MatrixError::Planted(format!(
                    "{axis} {i} belongs to co-clusters {prev} and {k}; planted sets must be disjoint"
                )));
            }
        }
    }
    Ok(owner)
}

impl PlantedGroundTruth {
    /// Co-clusters of the requested sizes over randomly scattered rows and
    /// columns, all with the same signal.
    pub fn scattered(
        n_rows: usize,
        n_cols: usize,
        row_sizes: &[usize],
        col_sizes: &[usize],
        signal: f64,
        noise_rate: f64,
        seed: u64,
    ) -> Result<Self, MatrixError> {
        if row_sizes.len() != col_sizes.len() {
            return Err(MatrixError::Planted("row and column size lists differ in length".into()));
        }
        if row_sizes.iter().sum::<usize>() > n_rows || col_sizes.iter().sum::<usize>() > n_cols {
            return Err(MatrixError::Planted("planted sizes exceed the matrix".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_b10c);
        let mut rows: Vec<usize> = (0..n_rows).collect();
        let mut cols: Vec<usize> = (0..n_cols).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let (mut r0, mut c0) = (0, 0);
        let coclusters = row_sizes
            .iter()
            .zip(col_sizes)
            .map(|(&rs, &cs)| {
                let mut r: Vec<usize> = rows[r0..r0 + rs].to_vec();
                let mut c: Vec<usize> = cols[c0..c0 + cs].to_vec();
                r.sort_unstable();
                c.sort_unstable();
                r0 += rs;
                c0 += cs;
                PlantedCoCluster { rows: r, cols: c, signal }
            })
            .collect();
        Ok(Self {
            coclusters,
            noise_rate,
            seed,
        })
    }

    fn owners(&self, n_rows: usize, n_cols: usize) -> Result<(Vec<Option<usize>>, Vec<Option<usize>>), MatrixError> {
        let rows = owners(n_rows, self.coclusters.iter().map(|c| c.rows.as_slice()).enumerate(), "row")?;
        let cols = owners(n_cols, self.coclusters.iter().map(|c| c.cols.as_slice()).enumerate(), "column")?;
        Ok((rows, cols))
    }

    pub fn validate(&self, n_rows: usize, n_cols: usize) -> Result<(), MatrixError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(MatrixError::Shape("planted matrix must be at least 1x1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(MatrixError::Planted(format!("noise_rate {} outside [0, 1]", self.noise_rate)));
        }
        for (k, c) in self.coclusters.iter().enumerate() {
            if !(c.signal > self.noise_rate && c.signal <= 1.0) {
                return Err(MatrixError::Planted(format!(
                    "co-cluster {k} signal {} must lie in (noise_rate, 1]",
                    c.signal
                )));
            }
        }
        self.owners(n_rows, n_cols).map(|_| ())
    }

    /// Draws the matrix. Cells are visited in row-major order with one
    /// uniform draw each, so the output depends only on the seed.
    pub fn generate<T: Scalar>(&self, n_rows: usize, n_cols: usize, kind: StorageKind) -> Result<DataMatrix<T>, MatrixError> {
        self.validate(n_rows, n_cols)?;
        let (row_owner, col_owner) = self.owners(n_rows, n_cols)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut triplets = Vec::new();
        for (r, ro) in row_owner.iter().enumerate() {
            for (c, co) in col_owner.iter().enumerate() {
                let p = match (ro, co) {
                    (Some(a), Some(b)) if a == b => self.coclusters[*a].signal,
                    _ => self.noise_rate,
                };
                let u: f64 = rng.gen();
                if u < p {
                    triplets.push((r, c, T::one()));
                }
            }
        }
        let m = DataMatrix::from_checked_triplets(n_rows, n_cols, triplets)?;
        Ok(m.to_storage(kind))
    }

    /// Row and column labels: co-cluster index, or `coclusters.len()` for
    /// background indices.
    pub fn truth_labels(&self, n_rows: usize, n_cols: usize) -> Result<(Vec<usize>, Vec<usize>), MatrixError> {
        let (rows, cols) = self.owners(n_rows, n_cols)?;
        let bg = self.coclusters.len();
        Ok((
            rows.into_iter().map(|o| o.unwrap_or(bg)).collect(),
            cols.into_iter().map(|o| o.unwrap_or(bg)).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blocks(noise: f64, seed: u64) -> PlantedGroundTruth {
        PlantedGroundTruth {
            coclusters: vec![
                PlantedCoCluster { rows: vec![0, 1], cols: vec![0, 1], signal: 1.0 },
                PlantedCoCluster { rows: vec![2, 3], cols: vec![2, 3], signal: 1.0 },
            ],
            noise_rate: noise,
            seed,
        }
    }

    #[test]
    fn noiseless_block_diagonal() {
        let m: DataMatrix<f64> = two_blocks(0.0, 7).generate(4, 4, StorageKind::Dense).unwrap();
        assert_eq!(
            m.to_dense_values(),
            vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn same_seed_same_matrix() {
        let t = two_blocks(0.3, 11);
        let a: DataMatrix<f64> = t.generate(4, 4, StorageKind::Sparse).unwrap();
        let b: DataMatrix<f64> = t.generate(4, 4, StorageKind::Sparse).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn background_density_within_binomial_interval() {
        // 100x80 with two 20x16 co-clusters: 8000 - 640 = 7360 background
        // cells at rate 0.01, mean 73.6, sd 8.5. The accepted density band
        // [0.005, 0.02] is more than four sd on each side.
        let truth = PlantedGroundTruth::scattered(100, 80, &[20, 20], &[16, 16], 0.9, 0.01, 3).unwrap();
        let m: DataMatrix<f64> = truth.generate(100, 80, StorageKind::Sparse).unwrap();
        let (rl, cl) = truth.truth_labels(100, 80).unwrap();
        let mut background_cells = 0usize;
        let mut background_nnz = 0usize;
        for r in 0..100 {
            for c in 0..80 {
                if rl[r] == 2 || rl[r] != cl[c] {
                    background_cells += 1;
                    if m.get(r, c) != 0.0 {
                        background_nnz += 1;
                    }
                }
            }
        }
        assert_eq!(background_cells, 7360);
        let density = background_nnz as f64 / background_cells as f64;
        assert!((0.005..=0.02).contains(&density), "density {density}");
    }

    #[test]
    fn overlap_rejected() {
        let mut t = two_blocks(0.0, 1);
        t.coclusters[1].rows = vec![1, 2];
        assert!(matches!(t.generate::<f64>(4, 4, StorageKind::Dense), Err(MatrixError::Planted(_))));
    }

    #[test]
    fn invalid_signal_rejected() {
        let mut t = two_blocks(0.5, 1);
        t.coclusters[0].signal = 0.4;
        assert!(t.validate(4, 4).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let json = r#"{"M": 4, "N": 4, "coclusters": [{"rows": [0,1], "cols": [2,3], "signal": 1.0}], "noise_rate": 0.0, "seed": 9}"#;
        let spec: PlantedSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.n_rows, 4);
        let m: DataMatrix<f32> = spec.generate(StorageKind::Sparse).unwrap();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(1, 3), 1.0);
        let (rows, cols) = spec.truth.truth_labels(4, 4).unwrap();
        assert_eq!(rows, vec![0, 0, 1, 1]);
        assert_eq!(cols, vec![1, 1, 0, 0]);
    }
}
