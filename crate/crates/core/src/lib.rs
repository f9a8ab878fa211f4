//! Scalable co-clustering of large matrices.
//!
//! The matrix is randomly permuted and cut into a grid of blocks sized by a
//! probabilistic detection bound, each block is co-clustered with a spectral
//! atom, and the block-level co-clusters are lifted back to global indices
//! and merged into one labeling.
//!
//! ```
//! use lamc_core::matrix::{PlantedGroundTruth, StorageKind};
//! use lamc_core::pipeline::{run_on_matrix, PipelineConfig};
//!
//! let truth = PlantedGroundTruth::scattered(60, 40, &[30, 30], &[20, 20], 1.0, 0.0, 7).unwrap();
//! let a: lamc_core::DataMatrixF64 = truth.generate(60, 40, StorageKind::Sparse).unwrap();
//! let report = run_on_matrix(&a, &PipelineConfig::new("in-memory", 2), None).unwrap();
//! assert_eq!(report.row_labels.len(), 60);
//! ```

pub mod matrix;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod scalar;
pub mod seed;
pub mod spectral;

pub use scalar::Scalar;

pub type DataMatrixF64 = matrix::DataMatrix<f64>;
pub type DataMatrixF32 = matrix::DataMatrix<f32>;
pub type BlockViewF64<'a> = matrix::BlockView<'a, f64>;
pub type BlockViewF32<'a> = matrix::BlockView<'a, f32>;
pub type SvdTripletsF64 = spectral::SvdTriplets<f64>;
pub type SvdTripletsF32 = spectral::SvdTriplets<f32>;
pub type SpectralEmbeddingF64 = spectral::SpectralEmbedding<f64>;
pub type SpectralEmbeddingF32 = spectral::SpectralEmbedding<f32>;
