use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::Seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    GaussianMixture {
        n_classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        separation: f64,
    },
    NearDuplicate {
        base_n: usize,
        replication: usize,
        noise_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub generator: Generator,
    pub seed: u64,
    /// For replicated datasets, the base sample each row was copied from.
    pub origin: Option<Vec<usize>>,
}

impl SyntheticDataset {
    pub fn n(&self) -> usize {
        self.features.n()
    }
}

/// Class means sit on the scaled standard simplex (`e_k · sep/√2`, so any
/// two are `sep` apart) when `c ≤ d`, otherwise on random directions of
/// norm `sep/√2`. Samples are grouped by class.
pub fn gen_gaussian_mixture(
    n_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    separation: f64,
    seed: Seed,
) -> Result<SyntheticDataset> {
    if n_classes < 2 {
        return Err(invalid_argument("a mixture needs at least two classes"));
    }
    if per_class == 0 || dim == 0 {
        return Err(invalid_argument("empty mixture"));
    }
    if !(spread >= 0.0 && separation >= 0.0) {
        return Err(invalid_argument("spread and separation must be non-negative"));
    }
    let mut rng = seed.stream("data");
    let radius = separation / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|k| {
            if n_classes <= dim {
                (0..dim).map(|j| if j == k { radius } else { 0.0 }).collect()
            } else {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect();

    let mut data = Vec::with_capacity(n_classes * per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                let g: f64 = StandardNormal.sample(&mut rng);
                data.push(m + spread * g);
            }
            labels.push(k);
        }
    }
    Ok(SyntheticDataset {
        features: FeatureMatrix::new(n_classes * per_class, dim, data)?,
        labels,
        n_classes,
        generator: Generator::GaussianMixture {
            n_classes,
            per_class,
            dim,
            spread,
            separation,
        },
        seed: seed.0,
        origin: None,
    })
}

/// Standardize every feature to zero mean and unit variance (constant
/// features are only centred).
pub fn standardize(x: &FeatureMatrix) -> FeatureMatrix {
    let (n, d) = (x.n(), x.d());
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut var = vec![0.0; d];
    for row in x.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    let data = x
        .rows()
        .flat_map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&var)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s.sqrt() } else { v - m })
                .collect::<Vec<_>>()
        })
        .collect();
    FeatureMatrix::new(n, d, data).expect("standardized values are finite")
}

/// Standardize `base`, then append `replication` noisy copies of every
/// sample. Originals come first, followed by one block per replica round.
pub fn gen_near_duplicate(
    base: &SyntheticDataset,
    replication: usize,
    noise_std: f64,
    seed: Seed,
) -> Result<SyntheticDataset> {
    if replication == 0 {
        return Err(invalid_argument("replication must be at least 1"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(invalid_argument("noise std must be non-negative"));
    }
    let normalized = standardize(&base.features);
    let (n, d) = (normalized.n(), normalized.d());
    let mut rng = seed.stream("replicate");
    let mut data = normalized.as_slice().to_vec();
    data.reserve(n * d * replication);
    let mut labels = base.labels.clone();
    let mut origin: Vec<usize> = (0..n).collect();
    for _ in 0..replication {
        for i in 0..n {
            for &v in normalized.row(i) {
                let g: f64 = StandardNormal.sample(&mut rng);
                data.push(v + noise_std * g);
            }
            labels.push(base.labels[i]);
            origin.push(i);
        }
    }
    Ok(SyntheticDataset {
        features: FeatureMatrix::new(n * (1 + replication), d, data)?,
        labels,
        n_classes: base.n_classes,
        generator: Generator::NearDuplicate {
            base_n: n,
            replication,
            noise_std,
        },
        seed: seed.0,
        origin: Some(origin),
    })
}
