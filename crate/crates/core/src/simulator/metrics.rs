//! Analysis metrics: correlations, subset informativeness and diversity.

use serde::{Deserialize, Serialize};

use crate::density::{DensityConvention, DensityProfile};
use crate::error::{invalid_argument, DacsError, Result};
use crate::matrix::{dot, FeatureMatrix};
use crate::model::ModelOutputs;

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid_argument(format!(
            "need two aligned series of length >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(DacsError::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCorrelation {
    pub entropy: f64,
    pub loss: Option<f64>,
}

/// Pearson correlation of similarity-convention density with entropy and,
/// when the outputs carry per-sample losses, with loss.
pub fn density_uncertainty_correlation(
    outputs: &ModelOutputs,
    density: &DensityProfile,
) -> Result<DensityCorrelation> {
    if density.len() != outputs.n() {
        return Err(invalid_argument("density and outputs are not aligned"));
    }
    let dens = match density.convention {
        DensityConvention::SimilarityBased => density.values.clone(),
        DensityConvention::DistanceBased => density.denser_is_higher(),
    };
    let entropy = pearson(&dens, &outputs.entropy)?;
    let loss = outputs
        .loss_per_sample
        .as_ref()
        .map(|l| pearson(&dens, l))
        .transpose()?;
    Ok(DensityCorrelation { entropy, loss })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    /// Mean entropy of the subset divided by ln c.
    pub informativeness: f64,
    /// Mean pairwise cosine distance between subset embeddings.
    pub diversity: f64,
}

pub fn subset_metrics(selected: &[usize], outputs: &ModelOutputs, embeddings: &FeatureMatrix) -> Result<SubsetMetrics> {
    if selected.is_empty() {
        return Err(invalid_argument("subset metrics need a nonempty selection"));
    }
    let ln_c = (outputs.n_classes as f64).ln();
    let informativeness = selected.iter().map(|&i| outputs.entropy[i]).sum::<f64>() / (selected.len() as f64 * ln_c);
    let diversity = if selected.len() == 1 {
        log::warn!("diversity of a single sample is defined as 0");
        0.0
    } else {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in selected.iter().enumerate() {
            for &j in &selected[a + 1..] {
                total += 1.0 - dot(embeddings.row(i), embeddings.row(j));
                pairs += 1;
            }
        }
        total / pairs as f64
    };
    Ok(SubsetMetrics {
        informativeness,
        diversity,
    })
}

/// Fraction of `selected` that shares a source sample with another member
/// of `selected`.
pub fn near_duplicate_fraction(selected: &[usize], origin: &[usize]) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::new();
    for &i in selected {
        *counts.entry(origin[i]).or_insert(0usize) += 1;
    }
    let dup = selected.iter().filter(|&&i| counts[&origin[i]] > 1).count();
    dup as f64 / selected.len() as f64
}
