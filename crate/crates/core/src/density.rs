//! Per-sample local density.
//!
//! Two estimators live here. [`exact_knn_density`] is the brute-force mean
//! distance to the k nearest neighbours (higher = sparser) and serves as
//! the reference. [`lsh_density`] hashes unit-norm embeddings with a single
//! random rotation, sorts them by bucket, cuts the sorted order into
//! equal-size chunks and sums sigmoid-weighted cosine similarities inside
//! each sample's chunk window (higher = denser).

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::WindowMode;
use crate::error::{invalid_argument, Result};
use crate::matrix::{dot, l2_norm, FeatureMatrix};
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityConvention {
    /// Mean neighbour distance; higher means sparser.
    DistanceBased,
    /// Sum of weighted similarities; higher means denser.
    SimilarityBased,
}

impl DensityConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityConvention::DistanceBased => "distance",
            DensityConvention::SimilarityBased => "similarity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    CosineDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "kebab-case")]
pub enum DensityParams {
    ExactKnn { k_nn: usize, metric: Metric },
    Lsh { n_buckets: usize, chunk_size: usize, seed: u64, window: WindowMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub values: Vec<f64>,
    pub convention: DensityConvention,
    pub params: DensityParams,
    /// Set when some sample had no neighbours to compare against.
    pub degenerate: bool,
}

impl DensityProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values oriented so that larger always means denser.
    pub fn denser_is_higher(&self) -> Vec<f64> {
        match self.convention {
            DensityConvention::SimilarityBased => self.values.clone(),
            DensityConvention::DistanceBased => self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Mean distance from each row to its `k_nn` nearest other rows.
///
/// Quadratic in n; meant as a reference, not for production pools.
pub fn exact_knn_density(x: &FeatureMatrix, k_nn: usize, metric: Metric) -> Result<DensityProfile> {
    let n = x.n();
    if k_nn == 0 || k_nn >= n {
        return Err(invalid_argument(format!(
            "k_nn must be in [1, n) (k_nn={k_nn}, n={n})"
        )));
    }
    let norms: Vec<f64> = x.rows().map(l2_norm).collect();
    let values = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| match metric {
                    Metric::Euclidean => xi
                        .iter()
                        .zip(x.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    Metric::CosineDistance => {
                        let denom = norms[i] * norms[j];
                        if denom == 0.0 {
                            1.0
                        } else {
                            1.0 - dot(xi, x.row(j)) / denom
                        }
                    }
                })
                .collect();
            dists.select_nth_unstable_by(k_nn - 1, f64::total_cmp);
            // sum in a fixed order so the result does not depend on the partition
            let mut nearest = dists[..k_nn].to_vec();
            nearest.sort_unstable_by(f64::total_cmp);
            nearest.iter().sum::<f64>() / k_nn as f64
        })
        .collect();
    Ok(DensityProfile {
        values,
        convention: DensityConvention::DistanceBased,
        params: DensityParams::ExactKnn { k_nn, metric },
        degenerate: false,
    })
}

/// Bucket assignment from one fixed random rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LshAssignment {
    pub bucket_ids: Vec<usize>,
    /// Sample indices sorted by (bucket id, index).
    pub sorted_order: Vec<usize>,
    pub chunk_size: usize,
    pub n_buckets: usize,
    pub rotation_seed: u64,
}

impl LshAssignment {
    pub fn len(&self) -> usize {
        self.sorted_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_order.is_empty()
    }

    /// Sorted positions in the density window of sorted position `pos`.
    pub fn window(&self, pos: usize, mode: WindowMode) -> std::ops::Range<usize> {
        let n = self.len();
        let m = self.chunk_size;
        let chunk = pos / m;
        let first = match mode {
            WindowMode::WithPreceding => chunk.saturating_sub(1),
            WindowMode::OwnChunkOnly => chunk,
        };
        (first * m)..((chunk + 1) * m).min(n)
    }
}

/// Draw the `d × k/2` rotation with standard-normal entries, row-major.
pub fn draw_rotation(d: usize, n_buckets: usize, seed: Seed) -> Vec<f64> {
    let mut rng = seed.stream("rotation");
    (0..d * n_buckets / 2)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

/// Hash each unit-norm row into one of `n_buckets` buckets.
pub fn lsh_assign(x: &FeatureMatrix, n_buckets: usize, seed: Seed) -> Result<LshAssignment> {
    x.require_unit_norm("lsh_assign")?;
    if n_buckets == 0 || !n_buckets.is_multiple_of(2) {
        return Err(invalid_argument(format!(
            "bucket count must be a positive even number, got {n_buckets}"
        )));
    }
    let rotation = draw_rotation(x.d(), n_buckets, seed);
    let bucket_ids = hash_with_rotation(x, &rotation, n_buckets);
    Ok(assignment_from_buckets(bucket_ids, n_buckets, seed.0))
}

/// Signed-argmax hash under an explicit rotation (row-major `d × k/2`).
pub fn hash_with_rotation(x: &FeatureMatrix, rotation: &[f64], n_buckets: usize) -> Vec<usize> {
    let half = n_buckets / 2;
    let d = x.d();
    assert_eq!(rotation.len(), d * half, "rotation shape mismatch");
    x.rows()
        .map(|z| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            let mut projected = vec![0.0; half];
            for (a, &za) in z.iter().enumerate() {
                let r = &rotation[a * half..(a + 1) * half];
                for (p, &ra) in projected.iter_mut().zip(r) {
                    *p += za * ra;
                }
            }
            // [Rᵀz ; −Rᵀz], first maximum wins
            for (b, &p) in projected.iter().enumerate() {
                if p > best_val {
                    best_val = p;
                    best = b;
                }
            }
            for (b, &p) in projected.iter().enumerate() {
                if -p > best_val {
                    best_val = -p;
                    best = half + b;
                }
            }
            best
        })
        .collect()
}

pub fn assignment_from_buckets(bucket_ids: Vec<usize>, n_buckets: usize, rotation_seed: u64) -> LshAssignment {
    let n = bucket_ids.len();
    let mut sorted_order: Vec<usize> = (0..n).collect();
    sorted_order.sort_by_key(|&i| (bucket_ids[i], i));
    LshAssignment {
        bucket_ids,
        sorted_order,
        chunk_size: (n / n_buckets).max(1),
        n_buckets,
        rotation_seed,
    }
}

/// Sorted positions forming the window of sorted position `pos`
/// (own chunk plus the preceding one).
pub fn chunk_window(assignment: &LshAssignment, pos: usize) -> Result<Vec<usize>> {
    if pos >= assignment.len() {
        return Err(invalid_argument(format!(
            "position {pos} out of range (n={})",
            assignment.len()
        )));
    }
    Ok(assignment.window(pos, WindowMode::WithPreceding).collect())
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn lsh_density(x: &FeatureMatrix, assignment: &LshAssignment) -> Result<DensityProfile> {
    lsh_density_with(x, assignment, WindowMode::WithPreceding)
}

/// Sigmoid-weighted cosine similarity summed over each sample's window.
/// Values are aligned to the rows of `x`.
pub fn lsh_density_with(
    x: &FeatureMatrix,
    assignment: &LshAssignment,
    window: WindowMode,
) -> Result<DensityProfile> {
    x.require_unit_norm("lsh_density")?;
    if assignment.len() != x.n() {
        return Err(invalid_argument(format!(
            "assignment covers {} samples but matrix has {}",
            assignment.len(),
            x.n()
        )));
    }
    let order = &assignment.sorted_order;
    let by_position: Vec<f64> = (0..order.len())
        .into_par_iter()
        .map(|pos| {
            let zi = x.row(order[pos]);
            assignment
                .window(pos, window)
                .filter(|&q| q != pos)
                .map(|q| {
                    let c = dot(zi, x.row(order[q]));
                    sigmoid(c) * c
                })
                .sum()
        })
        .collect();
    let mut values = vec![0.0; x.n()];
    for (pos, &v) in by_position.iter().enumerate() {
        values[order[pos]] = v;
    }
    let degenerate = (0..order.len()).any(|p| assignment.window(p, window).len() < 2);
    if degenerate {
        log::warn!("lsh_density: some samples have an empty window; their density is 0");
    }
    Ok(DensityProfile {
        values,
        convention: DensityConvention::SimilarityBased,
        params: DensityParams::Lsh {
            n_buckets: assignment.n_buckets,
            chunk_size: assignment.chunk_size,
            seed: assignment.rotation_seed,
            window,
        },
        degenerate,
    })
}
