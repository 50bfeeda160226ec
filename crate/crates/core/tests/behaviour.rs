mod common;

use common::{brute_greedy, random_pool, rng, unit_vectors};
use dacs::density::{exact_knn_density, Metric};
use dacs::model::{ModelConfig, ToyModel};
use dacs::selection::{
    dacs_select, expand_and_squeeze, random_select, region_only_select, Region, ScoreSource, UncertaintyScores,
};
use dacs::simulator::{gen_gaussian_mixture, gen_near_duplicate};
use dacs::{AcquisitionConfig, FeatureMatrix, PoolState, Seed};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `n_tight` points near one direction followed by `n_diffuse` points
/// spread over the sphere.
fn tight_and_diffuse(n_tight: usize, n_diffuse: usize, d: usize, r: &mut ChaCha8Rng) -> FeatureMatrix {
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mut rows: Vec<Vec<f64>> = (0..n_tight)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| noise.sample(r)).collect();
            v[0] += 1.0;
            v
        })
        .collect();
    let spread = unit_vectors(n_diffuse, d, r);
    rows.extend(spread.rows().map(|row| row.to_vec()));
    FeatureMatrix::from_rows(&rows).unwrap().normalize_rows().unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn random_select_is_uniform() {
    let pool = PoolState::new(10, &[]).unwrap();
    let mut counts = [0usize; 10];
    for t in 0..10_000 {
        let r = random_select(&pool, 1, Seed(t));
        counts[r.selected[0]] += 1;
    }
    let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - 1000.0).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn random_select_exhausts_and_repeats() {
    let pool = PoolState::new(12, &[1, 5]).unwrap();
    let mut all = random_select(&pool, 10, Seed(3)).selected;
    all.sort_unstable();
    assert_eq!(all, pool.unlabeled());
    assert_eq!(random_select(&pool, 4, Seed(9)), random_select(&pool, 4, Seed(9)));
}

#[test]
fn region_selection_follows_density() {
    let mut r = rng(50);
    let x = tight_and_diffuse(100, 100, 8, &mut r);
    // oracle: the tight blob really is denser
    let exact = exact_knn_density(&x, 20, Metric::CosineDistance).unwrap().values;
    assert!(mean(&exact[..100]) < mean(&exact[100..]));

    let pool = PoolState::new(200, &[]).unwrap();
    let config = AcquisitionConfig {
        n_buckets: 10,
        ..AcquisitionConfig::with_budget(10)
    };
    let sparse = region_only_select(&pool, &x, &config, Seed(1), Region::Sparsest).unwrap();
    assert_eq!(sparse.selected.len(), 10);
    assert!(sparse.selected.iter().all(|&i| i >= 100), "{:?}", sparse.selected);
    let dense = region_only_select(&pool, &x, &config, Seed(1), Region::Densest).unwrap();
    assert!(dense.selected.iter().all(|&i| i < 100), "{:?}", dense.selected);
}

#[test]
fn region_budget_is_clamped_to_cluster() {
    let mut r = rng(51);
    let x = tight_and_diffuse(100, 100, 8, &mut r);
    let pool = PoolState::new(200, &[]).unwrap();
    let config = AcquisitionConfig {
        n_buckets: 10,
        ..AcquisitionConfig::with_budget(190)
    };
    let res = region_only_select(&pool, &x, &config, Seed(1), Region::Sparsest).unwrap();
    assert_eq!(res.selected.len(), res.per_cluster[0].size);
    assert!(!res.diagnostics.warnings.is_empty());
}

#[test]
fn dacs_favours_the_scattered_minority() {
    let mut r = rng(52);
    let x = tight_and_diffuse(350, 50, 8, &mut r);
    let pool = PoolState::new(400, &[]).unwrap();
    let config = AcquisitionConfig {
        n_breaks: 2,
        ..AcquisitionConfig::with_budget(20)
    };
    let res = dacs_select(&pool, &x, &config, Seed(2)).unwrap();
    assert_eq!(res.selected.len(), 20);
    let scattered = res.selected.iter().filter(|&&i| i >= 350).count();
    assert!(scattered > 10, "{scattered} of 20 from the scattered group");
}

#[test]
fn dacs_full_budget_takes_everything() {
    let mut r = rng(53);
    let x = unit_vectors(40, 5, &mut r);
    let pool = random_pool(40, 7, &mut r);
    let config = AcquisitionConfig {
        n_buckets: 6,
        ..AcquisitionConfig::with_budget(33)
    };
    let mut sel = dacs_select(&pool, &x, &config, Seed(0)).unwrap().selected;
    sel.sort_unstable();
    assert_eq!(sel, pool.unlabeled());
}

#[test]
fn dacs_single_pick_is_farthest_from_labeled() {
    let mut r = rng(54);
    let x = unit_vectors(50, 5, &mut r);
    let pool = random_pool(50, 5, &mut r);
    let config = AcquisitionConfig {
        n_buckets: 6,
        n_breaks: 1,
        ..AcquisitionConfig::with_budget(1)
    };
    let res = dacs_select(&pool, &x, &config, Seed(0)).unwrap();
    let (want, _) = brute_greedy(&x, pool.unlabeled(), pool.labeled(), 1, None);
    assert_eq!(res.selected, want);
}

#[test]
fn dacs_is_deterministic() {
    let mut r = rng(55);
    let x = unit_vectors(150, 6, &mut r);
    let pool = random_pool(150, 10, &mut r);
    let config = AcquisitionConfig {
        n_buckets: 10,
        ..AcquisitionConfig::with_budget(12)
    };
    assert_eq!(
        dacs_select(&pool, &x, &config, Seed(4)).unwrap(),
        dacs_select(&pool, &x, &config, Seed(4)).unwrap()
    );
}

#[test]
fn squeeze_without_slack_reorders_dacs() {
    let mut r = rng(56);
    let x = unit_vectors(120, 6, &mut r);
    let pool = random_pool(120, 6, &mut r);
    let config = AcquisitionConfig {
        n_buckets: 10,
        expand_factor: 1.0,
        ..AcquisitionConfig::with_budget(10)
    };
    let scores: Vec<f64> = (0..120).map(|i| ((i * 37) % 101) as f64).collect();
    let scores = UncertaintyScores::new(scores, ScoreSource::ExternalFile);
    let plain = dacs_select(&pool, &x, &config, Seed(1)).unwrap().selected;
    let squeezed = expand_and_squeeze(&pool, &x, &config, Seed(1), &scores).unwrap().selected;
    let mut a = plain.clone();
    let mut b = squeezed.clone();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b);
    for w in squeezed.windows(2) {
        assert!(scores.scores[w[0]] >= scores.scores[w[1]]);
    }
}

#[test]
fn squeeze_with_uniform_scores_keeps_dacs_order() {
    let mut r = rng(57);
    let x = unit_vectors(120, 6, &mut r);
    let pool = random_pool(120, 6, &mut r);
    let config = AcquisitionConfig {
        n_buckets: 10,
        ..AcquisitionConfig::with_budget(8)
    };
    let scores = UncertaintyScores::new(vec![0.5; 120], ScoreSource::ExternalFile);
    let wide = dacs_select(&pool, &x, &AcquisitionConfig { budget: 16, ..config.clone() }, Seed(2))
        .unwrap()
        .selected;
    let squeezed = expand_and_squeeze(&pool, &x, &config, Seed(2), &scores).unwrap().selected;
    assert_eq!(squeezed, wide[..8]);
}

fn two_blobs(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { -2.0 } else { 2.0 };
        rows.push(vec![centre + noise.sample(&mut r), noise.sample(&mut r)]);
        labels.push(c);
    }
    (FeatureMatrix::from_rows(&rows).unwrap(), labels)
}

/// Plain logistic regression by gradient descent, used to confirm the
/// blobs are linearly separable.
fn logistic_accuracy(x: &FeatureMatrix, labels: &[usize]) -> f64 {
    let (mut w, mut b) = ([0.0f64; 2], 0.0f64);
    for _ in 0..500 {
        let (mut gw, mut gb) = ([0.0; 2], 0.0);
        for (row, &y) in x.rows().zip(labels) {
            let p = 1.0 / (1.0 + (-(w[0] * row[0] + w[1] * row[1] + b)).exp());
            let e = p - y as f64;
            gw[0] += e * row[0];
            gw[1] += e * row[1];
            gb += e;
        }
        let n = labels.len() as f64;
        w[0] -= 0.5 * gw[0] / n;
        w[1] -= 0.5 * gw[1] / n;
        b -= 0.5 * gb / n;
    }
    let correct = x
        .rows()
        .zip(labels)
        .filter(|(row, &y)| ((w[0] * row[0] + w[1] * row[1] + b > 0.0) as usize) == y)
        .count();
    correct as f64 / labels.len() as f64
}

#[test]
fn toy_model_fits_separable_blobs() {
    let (x, labels) = two_blobs(100, 60);
    assert_eq!(logistic_accuracy(&x, &labels), 1.0);
    let config = ModelConfig {
        n_classes: 2,
        reduced_dim: 1,
        ..ModelConfig::default()
    };
    let mut model = ToyModel::new(config, 2, Seed(1)).unwrap();
    let all: Vec<usize> = (0..100).collect();
    model.train(&x, &labels, &all, Seed(1)).unwrap();
    assert!(model.infer(&x).accuracy(&labels) >= 0.99);
}

fn trained(config: ModelConfig, x: &FeatureMatrix, labels: &[usize]) -> ToyModel {
    let mut model = ToyModel::new(config, x.d(), Seed(5)).unwrap();
    let all: Vec<usize> = (0..x.n()).collect();
    model.train(x, labels, &all, Seed(5)).unwrap();
    model
}

fn mixture_task() -> (FeatureMatrix, Vec<usize>) {
    let ds = gen_gaussian_mixture(3, 30, 6, 1.0, 3.0, Seed(8)).unwrap();
    (ds.features, ds.labels)
}

fn base_config(hidden: Option<usize>) -> ModelConfig {
    ModelConfig {
        n_classes: 3,
        reduced_dim: 3,
        hidden,
        epochs: 12,
        stop_epoch: 9,
        batch_size: 16,
        learning_rate: 0.2,
        ..ModelConfig::default()
    }
}

#[test]
fn zero_lambda_matches_training_without_aux_head() {
    let (x, labels) = mixture_task();
    for hidden in [None, Some(5)] {
        let with_aux = trained(ModelConfig { lambda: 0.0, ..base_config(hidden) }, &x, &labels);
        let without = trained(ModelConfig { aux_head: false, ..base_config(hidden) }, &x, &labels);
        assert_eq!(with_aux.params.main, without.params.main);
        assert_eq!(with_aux.params.trunk, without.params.trunk);
    }
}

#[test]
fn stop_epoch_zero_keeps_aux_loss_off_the_trunk() {
    let (x, labels) = mixture_task();
    let stopped = trained(ModelConfig { stop_epoch: 0, ..base_config(Some(5)) }, &x, &labels);
    let no_aux = trained(ModelConfig { lambda: 0.0, ..base_config(Some(5)) }, &x, &labels);
    assert_eq!(stopped.params.trunk, no_aux.params.trunk);
    assert_eq!(stopped.params.main, no_aux.params.main);

    let joint = trained(ModelConfig { stop_epoch: 12, ..base_config(Some(5)) }, &x, &labels);
    assert_ne!(joint.params.trunk, no_aux.params.trunk);
}

#[test]
fn training_is_deterministic() {
    let (x, labels) = mixture_task();
    let a = trained(base_config(Some(4)), &x, &labels);
    let b = trained(base_config(Some(4)), &x, &labels);
    let bits = |m: &ToyModel| m.params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn embeddings_stay_unit_norm_for_any_weights() {
    let (x, _) = mixture_task();
    let mut model = ToyModel::new(base_config(None), x.d(), Seed(3)).unwrap();
    let flat: Vec<f64> = model.params.to_flat().iter().enumerate().map(|(i, _)| ((i * 13) % 7) as f64 - 3.0).collect();
    model.params.set_flat(&flat).unwrap();
    let out = model.infer(&x);
    for row in out.embeddings.rows() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn near_duplicate_set_is_three_times_larger() {
    let base = gen_gaussian_mixture(5, 200, 8, 1.0, 3.0, Seed(1)).unwrap();
    assert_eq!(base.n(), 1000);
    let nd = gen_near_duplicate(&base, 2, 0.1, Seed(1)).unwrap();
    assert_eq!(nd.n(), 3000);
}
