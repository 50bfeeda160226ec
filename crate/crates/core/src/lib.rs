//! Density-aware core-set selection for pool-based active learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`matrix`], [`pool`], [`rng`], [`config`]: shared data model
//! - [`density`]: exact kNN and LSH density estimators
//! - [`partition`]: Jenks breaks and per-cluster budget allocation
//! - [`selection`]: acquisition strategies
//! - [`model`]: linear softmax learner with a normalized auxiliary head
//! - [`simulator`]: synthetic datasets, the AL loop and analysis metrics

pub mod config;
pub mod density;
pub mod error;
pub mod matrix;
pub mod model;
pub mod partition;
pub mod pool;
pub mod rng;
pub mod selection;
pub mod simulator;

pub use config::{AcquisitionConfig, ReferenceSet, WindowMode};
pub use error::{DacsError, Result};
pub use matrix::FeatureMatrix;
pub use pool::PoolState;
pub use rng::Seed;
