//! Acquisition strategies.
//!
//! The density-aware strategy estimates LSH density over the unlabeled
//! pool, splits the density spectrum with Jenks breaks, allocates the
//! budget across clusters by inverse size and then runs cosine k-center
//! greedy inside each cluster. Plain core-set, random, uncertainty top-b,
//! single-region ablations and the expand-and-squeeze combinator share the
//! same result type.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AcquisitionConfig, ReferenceSet};
use crate::density::{lsh_assign, lsh_density_with, DensityProfile};
use crate::error::{invalid_argument, Result};
use crate::matrix::{dot, FeatureMatrix};
use crate::partition::{allocate_budget, distinct_count, jenks_breaks, DensityPartition};
use crate::pool::PoolState;
use crate::rng::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    Entropy,
    LossProxy,
    ExternalFile,
}

/// Per-sample uncertainty, indexed by sample id. Higher is more uncertain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub scores: Vec<f64>,
    pub source: ScoreSource,
}

impl UncertaintyScores {
    pub fn new(scores: Vec<f64>, source: ScoreSource) -> Self {
        UncertaintyScores { scores, source }
    }

    fn get(&self, idx: usize) -> Result<f64> {
        match self.scores.get(idx) {
            Some(v) if v.is_finite() => Ok(*v),
            _ => Err(invalid_argument(format!("missing uncertainty score for sample {idx}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub cluster: usize,
    pub size: usize,
    pub mean_density: Option<f64>,
    pub ratio: f64,
    pub budget: usize,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Max cosine similarity to the reference set at the moment each
    /// sample was picked; `None` for a cold-start pick or non-greedy picks.
    pub max_similarity: Vec<Option<f64>>,
    pub breaks: Vec<f64>,
    pub n_breaks_used: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    pub selected: Vec<usize>,
    pub per_cluster: Vec<ClusterSelection>,
    pub diagnostics: Diagnostics,
}

impl AcquisitionResult {
    fn single(selected: Vec<usize>, size: usize, max_similarity: Vec<Option<f64>>) -> Self {
        AcquisitionResult {
            per_cluster: vec![ClusterSelection {
                cluster: 0,
                size,
                mean_density: None,
                ratio: 1.0,
                budget: selected.len(),
                selected: selected.clone(),
            }],
            selected,
            diagnostics: Diagnostics {
                max_similarity,
                n_breaks_used: 1,
                ..Default::default()
            },
        }
    }

    fn empty() -> Self {
        AcquisitionResult {
            selected: Vec::new(),
            per_cluster: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Picks and the max-similarity value each was chosen at.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub picks: Vec<usize>,
    pub max_similarity: Vec<Option<f64>>,
}

/// Cosine k-center greedy: repeatedly take the candidate whose highest
/// similarity to the reference set (plus earlier picks) is lowest.
///
/// `density`, when given, is aligned to `candidates` (similarity
/// convention) and decides the first pick if the reference set is empty.
/// Ties go to the lowest sample index.
pub fn kcenter_greedy(
    candidates: &[usize],
    reference: &[usize],
    n_pick: usize,
    features: &FeatureMatrix,
    density: Option<&[f64]>,
) -> Result<GreedyTrace> {
    features.require_unit_norm("kcenter_greedy")?;
    if n_pick > candidates.len() {
        return Err(invalid_argument(format!(
            "cannot pick {n_pick} from {} candidates",
            candidates.len()
        )));
    }
    if let Some(d) = density {
        if d.len() != candidates.len() {
            return Err(invalid_argument("density profile not aligned to candidates"));
        }
    }
    if let Some(&bad) = candidates.iter().chain(reference).find(|&&i| i >= features.n()) {
        return Err(invalid_argument(format!("sample {bad} out of range")));
    }

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&k| candidates[k]);
    let cand: Vec<usize> = order.iter().map(|&k| candidates[k]).collect();
    let dens: Option<Vec<f64>> = density.map(|d| order.iter().map(|&k| d[k]).collect());

    let mut max_sim: Vec<f64> = cand
        .par_iter()
        .map(|&j| {
            let zj = features.row(j);
            reference
                .iter()
                .map(|&r| dot(zj, features.row(r)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut taken = vec![false; cand.len()];
    let mut trace = GreedyTrace {
        picks: Vec::with_capacity(n_pick),
        max_similarity: Vec::with_capacity(n_pick),
    };

    for step in 0..n_pick {
        let cold = step == 0 && reference.is_empty();
        let pos = if cold {
            cold_start(&dens)
        } else {
            let mut best = usize::MAX;
            let mut best_val = f64::INFINITY;
            for (p, &v) in max_sim.iter().enumerate() {
                if !taken[p] && v < best_val {
                    best_val = v;
                    best = p;
                }
            }
            best
        };
        taken[pos] = true;
        let u = cand[pos];
        trace.picks.push(u);
        trace.max_similarity.push((!cold).then_some(max_sim[pos]));

        let zu = features.row(u);
        max_sim.par_iter_mut().enumerate().for_each(|(p, m)| {
            let s = dot(features.row(cand[p]), zu);
            if s > *m {
                *m = s;
            }
        });
    }
    Ok(trace)
}

fn cold_start(density: &Option<Vec<f64>>) -> usize {
    match density {
        Some(d) => {
            let mut best = 0;
            for (p, &v) in d.iter().enumerate() {
                if v < d[best] {
                    best = p;
                }
            }
            best
        }
        None => 0,
    }
}

fn clamp_budget(b: usize, available: usize, warnings: &mut Vec<String>) -> usize {
    if b > available {
        let msg = format!("budget {b} exceeds {available} available samples; clamped");
        log::warn!("{msg}");
        warnings.push(msg);
        available
    } else {
        b
    }
}

/// Density over the unlabeled pool, split into `h` clusters with budgets.
/// Cluster members are sample ids; `profile.values` is aligned to
/// `pool.unlabeled()`.
pub struct PoolPartition {
    pub profile: DensityProfile,
    pub partition: DensityPartition,
    pub n_breaks_used: usize,
    pub warnings: Vec<String>,
}

pub fn partition_pool(
    pool: &PoolState,
    features: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
    h: usize,
    budget: usize,
) -> Result<PoolPartition> {
    let unlabeled = pool.unlabeled();
    let sub = features.select_rows(unlabeled)?;
    let assignment = lsh_assign(&sub, config.n_buckets, seed)?;
    let profile = lsh_density_with(&sub, &assignment, config.window)?;

    let mut warnings = Vec::new();
    let distinct = distinct_count(&profile.values);
    let h_used = if h > distinct {
        let msg = format!("only {distinct} distinct densities; using {distinct} breaks instead of {h}");
        log::warn!("{msg}");
        warnings.push(msg);
        distinct
    } else {
        h
    };
    let jenks = jenks_breaks(&profile.values, h_used)?;
    let mut partition = allocate_budget(jenks, budget, config.temperature, unlabeled.len())?;
    for cluster in &mut partition.clusters {
        for idx in cluster.iter_mut() {
            *idx = unlabeled[*idx];
        }
    }
    warnings.append(&mut partition.warnings);
    Ok(PoolPartition {
        profile,
        partition,
        n_breaks_used: h_used,
        warnings,
    })
}

fn density_lookup<'a>(pool: &'a PoolState, profile: &'a DensityProfile) -> impl Fn(usize) -> f64 + 'a {
    let unlabeled = pool.unlabeled();
    move |idx| {
        let p = unlabeled.binary_search(&idx).expect("cluster member not in pool");
        profile.values[p]
    }
}

/// Density-aware core-set selection.
pub fn dacs_select(
    pool: &PoolState,
    features: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
) -> Result<AcquisitionResult> {
    config.validate()?;
    features.require_unit_norm("dacs_select")?;
    if pool.unlabeled().is_empty() {
        return Ok(AcquisitionResult::empty());
    }
    if config.n_breaks == 1 {
        return coreset_select(pool, features, config.budget);
    }
    let mut warnings = Vec::new();
    let budget = clamp_budget(config.budget, pool.unlabeled().len(), &mut warnings);
    let parts = partition_pool(pool, features, config, seed, config.n_breaks, budget)?;
    warnings.extend(parts.warnings.iter().cloned());
    let density_of = density_lookup(pool, &parts.profile);

    let mut selected: Vec<usize> = Vec::with_capacity(budget);
    let mut max_similarity = Vec::with_capacity(budget);
    let mut per_cluster = Vec::with_capacity(parts.partition.clusters.len());
    for (c, members) in parts.partition.clusters.iter().enumerate() {
        let n_pick = parts.partition.budgets[c];
        let dens: Vec<f64> = members.iter().map(|&i| density_of(i)).collect();
        let mean_density = dens.iter().sum::<f64>() / dens.len() as f64;
        let reference: Vec<usize> = match config.reference {
            ReferenceSet::Global => pool.labeled().iter().chain(&selected).copied().collect(),
            ReferenceSet::ClusterLocal => pool.labeled().to_vec(),
        };
        let trace = kcenter_greedy(members, &reference, n_pick, features, Some(&dens))?;
        per_cluster.push(ClusterSelection {
            cluster: c,
            size: members.len(),
            mean_density: Some(mean_density),
            ratio: parts.partition.ratios[c],
            budget: n_pick,
            selected: trace.picks.clone(),
        });
        selected.extend(trace.picks);
        max_similarity.extend(trace.max_similarity);
    }

    Ok(AcquisitionResult {
        selected,
        per_cluster,
        diagnostics: Diagnostics {
            max_similarity,
            breaks: parts.partition.breaks.clone(),
            n_breaks_used: parts.n_breaks_used,
            warnings,
        },
    })
}

/// Plain core-set: k-center greedy over the whole unlabeled pool.
pub fn coreset_select(pool: &PoolState, features: &FeatureMatrix, budget: usize) -> Result<AcquisitionResult> {
    features.require_unit_norm("coreset_select")?;
    let mut warnings = Vec::new();
    let b = clamp_budget(budget, pool.unlabeled().len(), &mut warnings);
    let trace = kcenter_greedy(pool.unlabeled(), pool.labeled(), b, features, None)?;
    let mut result = AcquisitionResult::single(trace.picks, pool.unlabeled().len(), trace.max_similarity);
    result.diagnostics.warnings = warnings;
    Ok(result)
}

/// Uniform sample without replacement.
pub fn random_select(pool: &PoolState, budget: usize, seed: Seed) -> AcquisitionResult {
    let mut warnings = Vec::new();
    let u = pool.unlabeled();
    let b = clamp_budget(budget, u.len(), &mut warnings);
    let mut rng = seed.stream("random-select");
    let selected: Vec<usize> = rand::seq::index::sample(&mut rng, u.len(), b)
        .into_iter()
        .map(|p| u[p])
        .collect();
    let mut result = AcquisitionResult::single(selected, u.len(), vec![None; b]);
    result.diagnostics.warnings = warnings;
    result
}

/// The `budget` most uncertain unlabeled samples; ties to the lowest index.
pub fn top_uncertainty_select(
    pool: &PoolState,
    scores: &UncertaintyScores,
    budget: usize,
) -> Result<AcquisitionResult> {
    let mut warnings = Vec::new();
    let u = pool.unlabeled();
    let b = clamp_budget(budget, u.len(), &mut warnings);
    let mut scored: Vec<(usize, f64)> = u.iter().map(|&i| Ok((i, scores.get(i)?))).collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let selected: Vec<usize> = scored[..b].iter().map(|&(i, _)| i).collect();
    let mut result = AcquisitionResult::single(selected, u.len(), vec![None; b]);
    result.diagnostics.warnings = warnings;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Sparsest,
    Densest,
}

pub const REGION_BREAKS: usize = 3;

/// Spend the whole budget on the sparsest or densest of three density
/// clusters.
pub fn region_only_select(
    pool: &PoolState,
    features: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
    which: Region,
) -> Result<AcquisitionResult> {
    config.validate()?;
    features.require_unit_norm("region_only_select")?;
    if pool.unlabeled().is_empty() {
        return Ok(AcquisitionResult::empty());
    }
    let mut warnings = Vec::new();
    let budget = clamp_budget(config.budget, pool.unlabeled().len(), &mut warnings);
    let parts = partition_pool(pool, features, config, seed, REGION_BREAKS, budget)?;
    warnings.extend(parts.warnings.iter().cloned());
    let c = match which {
        Region::Sparsest => 0,
        Region::Densest => parts.partition.clusters.len() - 1,
    };
    let members = &parts.partition.clusters[c];
    let n_pick = clamp_budget(budget, members.len(), &mut warnings);
    let density_of = density_lookup(pool, &parts.profile);
    let dens: Vec<f64> = members.iter().map(|&i| density_of(i)).collect();
    let trace = kcenter_greedy(members, pool.labeled(), n_pick, features, Some(&dens))?;
    Ok(AcquisitionResult {
        per_cluster: vec![ClusterSelection {
            cluster: c,
            size: members.len(),
            mean_density: Some(dens.iter().sum::<f64>() / dens.len() as f64),
            ratio: 1.0,
            budget: n_pick,
            selected: trace.picks.clone(),
        }],
        selected: trace.picks,
        diagnostics: Diagnostics {
            max_similarity: trace.max_similarity,
            breaks: parts.partition.breaks.clone(),
            n_breaks_used: parts.n_breaks_used,
            warnings,
        },
    })
}

/// Over-select `ceil(η·b)` candidates with DACS, keep the `b` most
/// uncertain. Ties keep DACS selection order.
pub fn expand_and_squeeze(
    pool: &PoolState,
    features: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
    scores: &UncertaintyScores,
) -> Result<AcquisitionResult> {
    config.validate()?;
    let mut warnings = Vec::new();
    let b = clamp_budget(config.budget, pool.unlabeled().len(), &mut warnings);
    let expanded = ((config.expand_factor * b as f64).ceil() as usize).min(pool.unlabeled().len());
    let inner = AcquisitionConfig {
        budget: expanded.max(1),
        ..config.clone()
    };
    let candidates = dacs_select(pool, features, &inner, seed)?;
    let mut ranked: Vec<(usize, usize, f64)> = candidates
        .selected
        .iter()
        .enumerate()
        .map(|(rank, &i)| Ok((rank, i, scores.get(i)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    ranked.truncate(b);

    let selected: Vec<usize> = ranked.iter().map(|&(_, i, _)| i).collect();
    let max_similarity = ranked
        .iter()
        .map(|&(rank, _, _)| candidates.diagnostics.max_similarity[rank])
        .collect();
    let per_cluster = candidates
        .per_cluster
        .iter()
        .map(|cs| {
            let kept: Vec<usize> = selected.iter().copied().filter(|i| cs.selected.contains(i)).collect();
            ClusterSelection {
                budget: kept.len(),
                selected: kept,
                ..cs.clone()
            }
        })
        .collect();
    warnings.extend(candidates.diagnostics.warnings);
    Ok(AcquisitionResult {
        selected,
        per_cluster,
        diagnostics: Diagnostics {
            max_similarity,
            breaks: candidates.diagnostics.breaks,
            n_breaks_used: candidates.diagnostics.n_breaks_used,
            warnings,
        },
    })
}

/// Strategy names accepted by the simulator and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Coreset,
    Dacs,
    SparseOnly,
    DenseOnly,
    /// Top-b by uncertainty score.
    Entropy,
    /// Expand-and-squeeze: DACS candidates ranked by uncertainty.
    Combined,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Random,
        Strategy::Coreset,
        Strategy::Dacs,
        Strategy::SparseOnly,
        Strategy::DenseOnly,
        Strategy::Entropy,
        Strategy::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Coreset => "coreset",
            Strategy::Dacs => "dacs",
            Strategy::SparseOnly => "sparse-only",
            Strategy::DenseOnly => "dense-only",
            Strategy::Entropy => "entropy",
            Strategy::Combined => "combined",
        }
    }

    pub fn needs_scores(self) -> bool {
        matches!(self, Strategy::Entropy | Strategy::Combined)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = crate::error::DacsError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| invalid_argument(format!("unknown strategy '{s}'")))
    }
}

/// Dispatch to the strategy's selection routine.
pub fn select(
    strategy: Strategy,
    pool: &PoolState,
    features: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
    scores: Option<&UncertaintyScores>,
) -> Result<AcquisitionResult> {
    let need_scores = || {
        scores.ok_or_else(|| invalid_argument(format!("strategy '{strategy}' requires uncertainty scores")))
    };
    match strategy {
        Strategy::Random => Ok(random_select(pool, config.budget, seed)),
        Strategy::Coreset => coreset_select(pool, features, config.budget),
        Strategy::Dacs => dacs_select(pool, features, config, seed),
        Strategy::SparseOnly => region_only_select(pool, features, config, seed, Region::Sparsest),
        Strategy::DenseOnly => region_only_select(pool, features, config, seed, Region::Densest),
        Strategy::Entropy => top_uncertainty_select(pool, need_scores()?, config.budget),
        Strategy::Combined => expand_and_squeeze(pool, features, config, seed, need_scores()?),
    }
}
