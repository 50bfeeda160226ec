//! Density-spectrum partitioning and per-cluster budget allocation.
//!
//! Jenks natural breaks is solved exactly with the classic O(n²h) dynamic
//! programme over sorted values. Equal values are merged into one weighted
//! unit first, so a tie can never straddle a break. Above
//! [`BINNING_THRESHOLD`] samples the units are further merged into
//! equal-frequency bins before the DP runs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, DacsError, Result};

pub const BINNING_THRESHOLD: usize = 20_000;
pub const N_BINS: usize = 1_024;

/// Result of Jenks natural breaks over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JenksPartition {
    /// Indices into the input list, one set per class, ascending by value.
    pub clusters: Vec<Vec<usize>>,
    /// Upper value of every class but the last. A value equal to a break
    /// belongs to the lower class.
    pub breaks: Vec<f64>,
    /// Total within-class sum of squared deviations.
    pub objective: f64,
}

/// Clusters with their allocated query budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPartition {
    pub clusters: Vec<Vec<usize>>,
    pub breaks: Vec<f64>,
    pub ratios: Vec<f64>,
    pub budgets: Vec<usize>,
    pub warnings: Vec<String>,
}

impl DensityPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Vec::len).collect()
    }
}

/// A run of sorted values treated as one block by the DP.
#[derive(Debug, Clone)]
struct Unit {
    count: f64,
    sum: f64,
    sum_sq: f64,
    max: f64,
    members: Vec<usize>,
}

fn build_units(values: &[f64]) -> Vec<Unit> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut units: Vec<Unit> = Vec::new();
    for i in order {
        let v = values[i];
        match units.last_mut() {
            Some(u) if u.max == v => {
                u.count += 1.0;
                u.sum += v;
                u.sum_sq += v * v;
                u.members.push(i);
            }
            _ => units.push(Unit {
                count: 1.0,
                sum: v,
                sum_sq: v * v,
                max: v,
                members: vec![i],
            }),
        }
    }
    units
}

/// Merge consecutive distinct-value units into roughly equal-frequency bins.
fn bin_units(units: Vec<Unit>, total: usize, n_bins: usize) -> Vec<Unit> {
    let target = total.div_ceil(n_bins) as f64;
    let mut bins: Vec<Unit> = Vec::with_capacity(n_bins);
    let mut current: Option<Unit> = None;
    for u in units {
        let cur = current.get_or_insert_with(|| Unit {
            count: 0.0,
            sum: 0.0,
            sum_sq: 0.0,
            max: u.max,
            members: Vec::new(),
        });
        cur.count += u.count;
        cur.sum += u.sum;
        cur.sum_sq += u.sum_sq;
        cur.max = u.max;
        cur.members.extend(u.members);
        if cur.count >= target {
            bins.push(current.take().unwrap());
        }
    }
    bins.extend(current);
    bins
}

/// Number of distinct values (exact equality).
pub fn distinct_count(values: &[f64]) -> usize {
    build_units(values).len()
}

/// Within-class sum of squared deviations for a class given by indices.
pub fn class_ssd(values: &[f64], members: &[usize]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let mean = members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64;
    members.iter().map(|&i| (values[i] - mean).powi(2)).sum()
}

pub fn jenks_breaks(values: &[f64], h: usize) -> Result<JenksPartition> {
    if values.is_empty() {
        return Err(invalid_argument("cannot partition an empty value list"));
    }
    if h == 0 {
        return Err(invalid_argument("number of classes must be positive"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid_argument(format!("value at {i} is not finite")));
    }
    let mut units = build_units(values);
    if h > units.len() {
        return Err(DacsError::DegeneratePartition {
            requested: h,
            distinct: units.len(),
        });
    }
    if values.len() > BINNING_THRESHOLD && units.len() > N_BINS {
        units = bin_units(units, values.len(), N_BINS);
        if h > units.len() {
            return Err(DacsError::DegeneratePartition {
                requested: h,
                distinct: units.len(),
            });
        }
    }

    let ends = optimal_class_ends(&units, h);
    let mut clusters = Vec::with_capacity(h);
    let mut breaks = Vec::with_capacity(h - 1);
    let mut start = 0;
    for (c, &end) in ends.iter().enumerate() {
        let mut members: Vec<usize> = units[start..=end]
            .iter()
            .flat_map(|u| u.members.iter().copied())
            .collect();
        members.sort_unstable();
        clusters.push(members);
        if c + 1 < h {
            breaks.push(units[end].max);
        }
        start = end + 1;
    }
    let objective = clusters.iter().map(|m| class_ssd(values, m)).sum();
    Ok(JenksPartition {
        clusters,
        breaks,
        objective,
    })
}

/// Returns, for each class, the index of its last unit.
fn optimal_class_ends(units: &[Unit], h: usize) -> Vec<usize> {
    let n = units.len();
    let mut w = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, u) in units.iter().enumerate() {
        w[i + 1] = w[i] + u.count;
        s[i + 1] = s[i] + u.sum;
        s2[i + 1] = s2[i] + u.sum_sq;
    }
    // SSD of units a..=b
    let cost = |a: usize, b: usize| -> f64 {
        let ww = w[b + 1] - w[a];
        let ss = s[b + 1] - s[a];
        (s2[b + 1] - s2[a] - ss * ss / ww).max(0.0)
    };

    // best[j]: optimal cost of covering units 0..=j with the current class count
    let mut best: Vec<f64> = (0..n).map(|j| cost(0, j)).collect();
    // start[c][j]: first unit of the last class in the optimum for c+1 classes over 0..=j
    let mut start = vec![vec![0usize; n]; h];
    for c in 1..h {
        let mut next = vec![f64::INFINITY; n];
        for j in c..n {
            let mut bj = f64::INFINITY;
            let mut arg = c;
            for i in c..=j {
                let v = best[i - 1] + cost(i, j);
                if v < bj {
                    bj = v;
                    arg = i;
                }
            }
            next[j] = bj;
            start[c][j] = arg;
        }
        best = next;
    }

    let mut ends = vec![0; h];
    let mut end = n - 1;
    for c in (0..h).rev() {
        ends[c] = end;
        if c > 0 {
            end = start[c][end] - 1;
        }
    }
    ends
}

/// Softmax over `(1 − size/total)/τ`.
pub fn selection_ratios(sizes: &[usize], total: usize, temperature: f64) -> Vec<f64> {
    let logits: Vec<f64> = sizes
        .iter()
        .map(|&s| (1.0 - s as f64 / total as f64) / temperature)
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Fill per-cluster budgets: floor of ratio × budget, capped at cluster
/// size, with the shortfall handed out one sample at a time in ascending
/// cluster-size order (earlier, sparser clusters first among equal sizes).
pub fn allocate_budget(
    partition: JenksPartition,
    budget: usize,
    temperature: f64,
    total_unlabeled: usize,
) -> Result<DensityPartition> {
    if budget == 0 {
        return Err(invalid_argument("budget must be positive"));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(invalid_argument(format!("temperature must be positive, got {temperature}")));
    }
    let sizes: Vec<usize> = partition.clusters.iter().map(Vec::len).collect();
    let covered: usize = sizes.iter().sum();
    if covered != total_unlabeled || total_unlabeled == 0 {
        return Err(invalid_argument(format!(
            "cluster sizes sum to {covered}, expected {total_unlabeled}"
        )));
    }
    let mut warnings = Vec::new();
    let budget = if budget > total_unlabeled {
        let msg = format!("budget {budget} exceeds unlabeled pool {total_unlabeled}; clamped");
        log::warn!("{msg}");
        warnings.push(msg);
        total_unlabeled
    } else {
        budget
    };

    let ratios = selection_ratios(&sizes, total_unlabeled, temperature);
    let mut budgets: Vec<usize> = ratios
        .iter()
        .zip(&sizes)
        .map(|(r, &s)| ((r * budget as f64).floor() as usize).min(s))
        .collect();

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    let mut remaining = budget - budgets.iter().sum::<usize>();
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if budgets[c] < sizes[c] {
                budgets[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }

    Ok(DensityPartition {
        clusters: partition.clusters,
        breaks: partition.breaks,
        ratios,
        budgets,
        warnings,
    })
}
