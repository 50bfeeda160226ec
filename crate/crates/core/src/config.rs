use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};

/// Which sorted positions contribute to a sample's LSH density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Own chunk plus the immediately preceding chunk.
    #[default]
    WithPreceding,
    OwnChunkOnly,
}

/// Reference set used by the per-cluster greedy pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSet {
    /// Labeled set plus everything selected so far, across clusters.
    #[default]
    Global,
    /// Labeled set plus the current cluster's picks only.
    ClusterLocal,
}

/// Acquisition hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub budget: usize,
    pub n_buckets: usize,
    pub n_breaks: usize,
    pub temperature: f64,
    pub reduced_dim: usize,
    pub expand_factor: f64,
    pub window: WindowMode,
    pub reference: ReferenceSet,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            budget: 1,
            n_buckets: 100,
            n_breaks: 4,
            temperature: 0.25,
            reduced_dim: 16,
            expand_factor: 2.0,
            window: WindowMode::default(),
            reference: ReferenceSet::default(),
        }
    }
}

impl AcquisitionConfig {
    pub fn with_budget(budget: usize) -> Self {
        AcquisitionConfig {
            budget,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid_argument("budget must be positive"));
        }
        if self.n_buckets == 0 || !self.n_buckets.is_multiple_of(2) {
            return Err(invalid_argument(format!(
                "bucket count must be a positive even number, got {}",
                self.n_buckets
            )));
        }
        if self.n_breaks == 0 {
            return Err(invalid_argument("number of breaks must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid_argument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.reduced_dim == 0 {
            return Err(invalid_argument("reduced dimension must be positive"));
        }
        if !(self.expand_factor >= 1.0 && self.expand_factor.is_finite()) {
            return Err(invalid_argument(format!(
                "expand factor must be >= 1, got {}",
                self.expand_factor
            )));
        }
        Ok(())
    }
}
