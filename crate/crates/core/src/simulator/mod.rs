//! End-to-end active-learning simulation on synthetic data.

pub mod dataset;
pub mod metrics;
pub mod runner;

pub use dataset::{gen_gaussian_mixture, gen_near_duplicate, Generator, SyntheticDataset};
pub use metrics::{density_uncertainty_correlation, subset_metrics, DensityCorrelation, SubsetMetrics};
pub use runner::{run_al, run_grid, DatasetSpec, ExperimentReport, RunStatus, SimConfig};
