use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{gen_gaussian_mixture, gen_near_duplicate, Generator, SyntheticDataset};
use super::metrics::{density_uncertainty_correlation, near_duplicate_fraction, subset_metrics, DensityCorrelation};
use crate::config::AcquisitionConfig;
use crate::density::{lsh_assign, lsh_density};
use crate::error::{invalid_argument, DacsError, Result};
use crate::matrix::FeatureMatrix;
use crate::model::{uncertainty, ModelConfig, ModelOutputs, ToyModel, UncertaintyKind};
use crate::pool::PoolState;
use crate::rng::Seed;
use crate::selection::{select, AcquisitionResult, Strategy};

/// Loop settings for one active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Fraction of the dataset held out for evaluation.
    pub test_fraction: f64,
    /// Initial labeled set size.
    pub init_labeled: usize,
    pub cycles: usize,
    pub model: ModelConfig,
    /// Acquisition settings; `budget` is the per-cycle query size.
    pub acquisition: AcquisitionConfig,
    /// Score used by the entropy and combined strategies.
    pub uncertainty: UncertaintyKind,
}

impl SimConfig {
    /// Desk-scale defaults for a dataset of `n` samples with `c` classes:
    /// 20% test, 2% of the pool as the initial set and as each cycle's
    /// budget, 8 cycles.
    pub fn desk_scale(n: usize, n_classes: usize) -> Self {
        let test_fraction = 0.2;
        let pool = n - (n as f64 * test_fraction).floor() as usize;
        let two_percent = ((pool as f64) * 0.02).round().max(1.0) as usize;
        SimConfig {
            test_fraction,
            init_labeled: two_percent,
            cycles: 8,
            model: ModelConfig {
                n_classes,
                ..ModelConfig::default()
            },
            acquisition: AcquisitionConfig::with_budget(two_percent),
            uncertainty: UncertaintyKind::Entropy,
        }
    }
}

/// Dataset recipe; each trial seed produces its own draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Mixture {
        n_classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        separation: f64,
    },
    NearDuplicate {
        n_classes: usize,
        base_per_class: usize,
        dim: usize,
        spread: f64,
        separation: f64,
        replication: usize,
        noise_std: f64,
    },
}

impl DatasetSpec {
    /// Five well-separated classes in 32 dimensions, 6,000 samples.
    pub fn default_mixture() -> Self {
        DatasetSpec::Mixture {
            n_classes: 5,
            per_class: 1200,
            dim: 32,
            spread: 1.0,
            separation: 3.5,
        }
    }

    /// 2,000 base samples from a tighter-overlap mixture, each replicated
    /// twice with small noise (6,000 samples total).
    pub fn default_near_duplicate() -> Self {
        DatasetSpec::NearDuplicate {
            n_classes: 5,
            base_per_class: 400,
            dim: 32,
            spread: 1.0,
            separation: 2.5,
            replication: 2,
            noise_std: 0.1,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            DatasetSpec::Mixture { n_classes, .. } | DatasetSpec::NearDuplicate { n_classes, .. } => *n_classes,
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            DatasetSpec::Mixture { n_classes, per_class, .. } => n_classes * per_class,
            DatasetSpec::NearDuplicate {
                n_classes,
                base_per_class,
                replication,
                ..
            } => n_classes * base_per_class * (1 + replication),
        }
    }

    pub fn build(&self, seed: Seed) -> Result<SyntheticDataset> {
        match *self {
            DatasetSpec::Mixture {
                n_classes,
                per_class,
                dim,
                spread,
                separation,
            } => gen_gaussian_mixture(n_classes, per_class, dim, spread, separation, seed),
            DatasetSpec::NearDuplicate {
                n_classes,
                base_per_class,
                dim,
                spread,
                separation,
                replication,
                noise_std,
            } => {
                let base = gen_gaussian_mixture(n_classes, base_per_class, dim, spread, separation, seed)?;
                gen_near_duplicate(&base, replication, noise_std, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub cluster: usize,
    pub size: usize,
    pub mean_density: Option<f64>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub labeled: usize,
    pub labeled_fraction: f64,
    pub test_accuracy: f64,
    /// Dataset indices acquired at the end of this cycle.
    pub acquired: Vec<usize>,
    pub informativeness: Option<f64>,
    pub diversity: Option<f64>,
    pub near_duplicate_fraction: Option<f64>,
    pub allocation: Vec<AllocationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Diverged { message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub train_s: f64,
    pub infer_s: f64,
    pub select_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub dataset: Generator,
    pub dataset_seed: u64,
    pub config: SimConfig,
    pub status: RunStatus,
    pub records: Vec<CycleRecord>,
    /// Density/uncertainty correlation of the cycle-0 model.
    pub correlation: Option<DensityCorrelation>,
    /// Wall-clock numbers; excluded from determinism comparisons.
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.test_accuracy)
    }

    /// JSON with the timing block removed.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "cycle,frac,acc,info,div,strategy,seed";

    pub fn csv_rows(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        self.records
            .iter()
            .map(|r| {
                format!(
                    "{},{:.6},{:.6},{},{},{},{}",
                    r.cycle,
                    r.labeled_fraction,
                    r.test_accuracy,
                    opt(r.informativeness),
                    opt(r.diversity),
                    self.strategy,
                    self.seed
                )
            })
            .collect()
    }
}

/// Train/test split. Replicas of one base sample always land on the same
/// side so the test set never contains a copy of a training point.
pub fn split_indices(dataset: &SyntheticDataset, test_fraction: f64, seed: Seed) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(invalid_argument(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let n = dataset.n();
    let group_of: Vec<usize> = match &dataset.origin {
        Some(o) => o.clone(),
        None => (0..n).collect(),
    };
    let n_groups = group_of.iter().max().map_or(0, |m| m + 1);
    let n_test_groups = (n_groups as f64 * test_fraction).floor() as usize;
    let mut rng = seed.stream("split");
    let mut is_test = vec![false; n_groups];
    for g in rand::seq::index::sample(&mut rng, n_groups, n_test_groups) {
        is_test[g] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[group_of[i]]);
    Ok((train, test))
}

struct Split {
    pool_ids: Vec<usize>,
    x_pool: FeatureMatrix,
    y_pool: Vec<usize>,
    x_test: FeatureMatrix,
    y_test: Vec<usize>,
}

fn make_split(dataset: &SyntheticDataset, test_fraction: f64, seed: Seed) -> Result<Split> {
    let (train, test) = split_indices(dataset, test_fraction, seed)?;
    if test.is_empty() {
        return Err(invalid_argument("empty test split"));
    }
    Ok(Split {
        x_pool: dataset.features.select_rows(&train)?,
        y_pool: train.iter().map(|&i| dataset.labels[i]).collect(),
        x_test: dataset.features.select_rows(&test)?,
        y_test: test.iter().map(|&i| dataset.labels[i]).collect(),
        pool_ids: train,
    })
}

/// The labeled set every strategy starts from for a given seed.
pub fn initial_labeled(pool_size: usize, init_labeled: usize, seed: Seed) -> Vec<usize> {
    let mut rng = seed.stream("initial-labeled");
    let mut init: Vec<usize> = rand::seq::index::sample(&mut rng, pool_size, init_labeled.min(pool_size)).into_vec();
    init.sort_unstable();
    init
}

fn train_fresh(config: &SimConfig, input_dim: usize, x: &FeatureMatrix, y: &[usize], labeled: &[usize], seed: Seed) -> Result<ToyModel> {
    let mut model = ToyModel::new(config.model.clone(), input_dim, seed)?;
    model.train(x, y, labeled, seed)?;
    Ok(model)
}

/// Density/uncertainty correlations of a trained model: entropy over the
/// unlabeled pool, loss over the test split. Density is the LSH estimate
/// on the model's embeddings.
pub fn model_density_correlation(
    model: &ToyModel,
    pool_outputs: &ModelOutputs,
    unlabeled: &[usize],
    x_test: &FeatureMatrix,
    y_test: &[usize],
    config: &AcquisitionConfig,
    seed: Seed,
) -> Result<DensityCorrelation> {
    let emb = pool_outputs.embeddings.select_rows(unlabeled)?;
    let assignment = lsh_assign(&emb, config.n_buckets, seed)?;
    let density = lsh_density(&emb, &assignment)?;
    let restricted = ModelOutputs {
        n_classes: pool_outputs.n_classes,
        probs: unlabeled.iter().flat_map(|&i| pool_outputs.prob_row(i).to_vec()).collect(),
        embeddings: emb,
        entropy: unlabeled.iter().map(|&i| pool_outputs.entropy[i]).collect(),
        loss_per_sample: None,
    };
    let entropy = density_uncertainty_correlation(&restricted, &density)?.entropy;

    let test_out = model.infer_with_labels(x_test, y_test)?;
    let assignment = lsh_assign(&test_out.embeddings, config.n_buckets, seed)?;
    let density = lsh_density(&test_out.embeddings, &assignment)?;
    let loss = density_uncertainty_correlation(&test_out, &density)?.loss;
    Ok(DensityCorrelation { entropy, loss })
}

/// Run the acquisition loop for `config.cycles` cycles.
pub fn run_al(dataset: &SyntheticDataset, strategy: Strategy, config: &SimConfig, seed: Seed) -> Result<ExperimentReport> {
    let started = Instant::now();
    config.acquisition.validate()?;
    let split = make_split(dataset, config.test_fraction, seed)?;
    let pool_size = split.pool_ids.len();
    let needed = config.init_labeled + config.cycles * config.acquisition.budget;
    if config.init_labeled == 0 || needed > pool_size {
        return Err(invalid_argument(format!(
            "initial set {} plus {} cycles of {} needs {needed} samples; pool has {pool_size}",
            config.init_labeled, config.cycles, config.acquisition.budget
        )));
    }
    let mut pool = PoolState::new(pool_size, &initial_labeled(pool_size, config.init_labeled, seed))?;
    let input_dim = split.x_pool.d();

    let mut report = ExperimentReport {
        strategy,
        seed: seed.0,
        dataset: dataset.generator.clone(),
        dataset_seed: dataset.seed,
        config: config.clone(),
        status: RunStatus::Completed,
        records: Vec::with_capacity(config.cycles + 1),
        correlation: None,
        timings: Timings::default(),
    };

    for cycle in 0..=config.cycles {
        let t = Instant::now();
        let cycle_seed = seed.child("cycle", cycle as u64);
        let model = match train_fresh(config, input_dim, &split.x_pool, &split.y_pool, pool.labeled(), cycle_seed) {
            Ok(m) => m,
            Err(e @ DacsError::Divergence { .. }) => {
                log::error!("{strategy} seed {}: {e}", seed.0);
                report.status = RunStatus::Diverged { message: e.to_string() };
                break;
            }
            Err(e) => return Err(e),
        };
        report.timings.train_s += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let test_accuracy = model.infer(&split.x_test).accuracy(&split.y_test);
        let mut record = CycleRecord {
            cycle,
            labeled: pool.labeled().len(),
            labeled_fraction: pool.labeled().len() as f64 / pool_size as f64,
            test_accuracy,
            acquired: Vec::new(),
            informativeness: None,
            diversity: None,
            near_duplicate_fraction: None,
            allocation: Vec::new(),
        };
        let needs_outputs = cycle < config.cycles || cycle == 0;
        let outputs = needs_outputs.then(|| model.infer(&split.x_pool));
        if cycle == 0 {
            let outputs = outputs.as_ref().expect("cycle 0 outputs");
            report.correlation = model_density_correlation(
                &model,
                outputs,
                pool.unlabeled(),
                &split.x_test,
                &split.y_test,
                &config.acquisition,
                seed.child("correlation", 0),
            )
            .map_err(|e| log::warn!("density correlation unavailable: {e}"))
            .ok();
        }
        report.timings.infer_s += t.elapsed().as_secs_f64();

        if cycle < config.cycles {
            let outputs = outputs.expect("outputs for acquisition");
            let t = Instant::now();
            let scores = strategy
                .needs_scores()
                .then(|| uncertainty(&outputs, config.uncertainty));
            let result = select(
                strategy,
                &pool,
                &outputs.embeddings,
                &config.acquisition,
                seed.child("acquire", cycle as u64),
                scores.as_ref(),
            )?;
            report.timings.select_s += t.elapsed().as_secs_f64();
            fill_acquisition(&mut record, &result, &outputs, dataset, &split.pool_ids)?;
            pool = pool.commit(&result.selected)?;
        }
        report.records.push(record);
    }
    report.timings.total_s = started.elapsed().as_secs_f64();
    Ok(report)
}

fn fill_acquisition(
    record: &mut CycleRecord,
    result: &AcquisitionResult,
    outputs: &ModelOutputs,
    dataset: &SyntheticDataset,
    pool_ids: &[usize],
) -> Result<()> {
    record.acquired = result.selected.iter().map(|&i| pool_ids[i]).collect();
    if !result.selected.is_empty() {
        let m = subset_metrics(&result.selected, outputs, &outputs.embeddings)?;
        record.informativeness = Some(m.informativeness);
        record.diversity = Some(m.diversity);
    }
    if let Some(origin) = &dataset.origin {
        record.near_duplicate_fraction = Some(near_duplicate_fraction(&record.acquired, origin));
    }
    record.allocation = result
        .per_cluster
        .iter()
        .map(|c| AllocationRow {
            cluster: c.cluster,
            size: c.size,
            mean_density: c.mean_density,
            budget: c.budget,
        })
        .collect();
    Ok(())
}

/// Run every (strategy, seed) pair. Each seed draws its own dataset,
/// shared by all strategies. Reports come back sorted by (strategy, seed).
pub fn run_grid(
    spec: &DatasetSpec,
    strategies: &[Strategy],
    seeds: &[u64],
    config: &SimConfig,
) -> Vec<(Strategy, u64, Result<ExperimentReport>)> {
    let datasets: Vec<(u64, Result<SyntheticDataset>)> = seeds
        .par_iter()
        .map(|&s| (s, spec.build(Seed(s).child("dataset", 0))))
        .collect();
    let jobs: Vec<(Strategy, usize)> = strategies
        .iter()
        .flat_map(|&st| (0..seeds.len()).map(move |k| (st, k)))
        .collect();
    let mut out: Vec<(Strategy, u64, Result<ExperimentReport>)> = jobs
        .par_iter()
        .map(|&(st, k)| {
            let (s, ds) = &datasets[k];
            let report = match ds {
                Ok(ds) => run_al(ds, st, config, Seed(*s)),
                Err(e) => Err(e.clone()),
            };
            (st, *s, report)
        })
        .collect();
    out.sort_by_key(|(st, s, _)| (*st, *s));
    out
}
