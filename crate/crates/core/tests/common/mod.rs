//! Independent reference implementations shared by the integration tests.
//! They favour obviousness over speed and share no code with the library.

#![allow(dead_code)]

use dacs::selection::partition_pool;
use dacs::{AcquisitionConfig, FeatureMatrix, PoolState, Seed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vectors(n: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| x / norm));
    }
    FeatureMatrix::new(n, d, data).unwrap()
}

fn cosine(x: &FeatureMatrix, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..x.d() {
        s += x.row(a)[k] * x.row(b)[k];
    }
    s
}

/// Best Jenks objective over every placement of `h − 1` breaks in the
/// sorted values, with the minimizing classes. `unique` is false when a
/// different placement comes within 1e-9 of the optimum.
pub struct JenksOracle {
    pub objective: f64,
    pub clusters: Vec<Vec<usize>>,
    pub unique: bool,
}

pub fn brute_jenks(values: &[f64], h: usize) -> JenksOracle {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    // ssd[i][j]: squared deviation of sorted[i..j], two-pass
    let mut ssd = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in i + 1..=n {
            let mean = sorted[i..j].iter().sum::<f64>() / (j - i) as f64;
            ssd[i][j] = sorted[i..j].iter().map(|v| (v - mean) * (v - mean)).sum();
        }
    }
    let mut best = f64::INFINITY;
    let mut second = f64::INFINITY;
    let mut best_cuts = Vec::new();
    let mut cuts = Vec::with_capacity(h - 1);
    enumerate(1, n, h - 1, &mut cuts, &mut |cuts| {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(n);
        let obj: f64 = bounds.windows(2).map(|w| ssd[w[0]][w[1]]).sum();
        if obj < best {
            second = best;
            best = obj;
            best_cuts = cuts.to_vec();
        } else if obj < second {
            second = obj;
        }
    });
    let mut bounds = vec![0];
    bounds.extend(best_cuts);
    bounds.push(n);
    let mut clusters: Vec<Vec<usize>> = bounds.windows(2).map(|w| order[w[0]..w[1]].to_vec()).collect();
    for c in &mut clusters {
        c.sort_unstable();
    }
    JenksOracle {
        objective: best,
        clusters,
        unique: second - best > 1e-9,
    }
}

fn enumerate(start: usize, n: usize, left: usize, cuts: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if left == 0 {
        visit(cuts);
        return;
    }
    for c in start..=n - left {
        cuts.push(c);
        enumerate(c + 1, n, left - 1, cuts, visit);
        cuts.pop();
    }
}

/// Greedy k-center recomputed from scratch at every step.
pub fn brute_greedy(
    x: &FeatureMatrix,
    candidates: &[usize],
    reference: &[usize],
    n_pick: usize,
    density: Option<&[f64]>,
) -> (Vec<usize>, Vec<Option<f64>>) {
    let mut centers: Vec<usize> = reference.to_vec();
    let mut picks = Vec::new();
    let mut sims = Vec::new();
    for _ in 0..n_pick {
        let open: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| !picks.contains(*c))
            .map(|(k, &c)| (k, c))
            .collect();
        if centers.is_empty() {
            // lowest density, then lowest index
            let (_, c) = *open
                .iter()
                .min_by(|a, b| {
                    let da = density.map_or(0.0, |d| d[a.0]);
                    let db = density.map_or(0.0, |d| d[b.0]);
                    da.partial_cmp(&db).unwrap().then(a.1.cmp(&b.1))
                })
                .unwrap();
            picks.push(c);
            sims.push(None);
            centers.push(c);
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &(_, c) in &open {
            let m = centers.iter().map(|&r| cosine(x, c, r)).fold(f64::NEG_INFINITY, f64::max);
            let better = match best {
                None => true,
                Some((bm, bc)) => m < bm || (m == bm && c < bc),
            };
            if better {
                best = Some((m, c));
            }
        }
        let (m, c) = best.unwrap();
        picks.push(c);
        sims.push(Some(m));
        centers.push(c);
    }
    (picks, sims)
}

/// DACS re-derived from the library's partition: per-cluster brute-force
/// greedy, sparsest cluster first, each cluster seeing the labeled set plus
/// every earlier pick.
pub fn dacs_oracle(
    pool: &PoolState,
    x: &FeatureMatrix,
    config: &AcquisitionConfig,
    seed: Seed,
) -> (Vec<usize>, Vec<Option<f64>>) {
    let budget = config.budget.min(pool.unlabeled().len());
    let parts = partition_pool(pool, x, config, seed, config.n_breaks, budget).unwrap();
    let mut selected = Vec::new();
    let mut sims = Vec::new();
    for (c, members) in parts.partition.clusters.iter().enumerate() {
        let dens: Vec<f64> = members
            .iter()
            .map(|m| parts.profile.values[pool.unlabeled().iter().position(|u| u == m).unwrap()])
            .collect();
        let reference: Vec<usize> = pool.labeled().iter().chain(&selected).copied().collect();
        let (p, s) = brute_greedy(x, members, &reference, parts.partition.budgets[c], Some(&dens));
        selected.extend(p);
        sims.extend(s);
    }
    (selected, sims)
}

/// Random pool over `n` samples with `n_labeled` labeled.
pub fn random_pool(n: usize, n_labeled: usize, rng: &mut ChaCha8Rng) -> PoolState {
    let mut ids: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    PoolState::new(n, &ids[..n_labeled]).unwrap()
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}
