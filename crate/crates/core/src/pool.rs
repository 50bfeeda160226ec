use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, invalid_state, Result};

/// Disjoint labeled/unlabeled index sets over a dataset of `n_total`
/// samples. Both sets are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    n_total: usize,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    cycle: usize,
}

impl PoolState {
    pub fn new(n_total: usize, initial_labeled: &[usize]) -> Result<Self> {
        let mut is_labeled = vec![false; n_total];
        for &i in initial_labeled {
            if i >= n_total {
                return Err(invalid_argument(format!(
                    "index {i} out of range for pool of {n_total}"
                )));
            }
            if is_labeled[i] {
                return Err(invalid_argument(format!("duplicate index {i}")));
            }
            is_labeled[i] = true;
        }
        Ok(Self::from_mask(n_total, &is_labeled, 0))
    }

    fn from_mask(n_total: usize, is_labeled: &[bool], cycle: usize) -> Self {
        let (labeled, unlabeled): (Vec<usize>, Vec<usize>) =
            (0..n_total).partition(|&i| is_labeled[i]);
        PoolState {
            n_total,
            labeled,
            unlabeled,
            cycle,
        }
    }

    /// Move `selected` from the unlabeled to the labeled set and advance
    /// the cycle counter.
    pub fn commit(&self, selected: &[usize]) -> Result<Self> {
        let mut is_labeled = vec![false; self.n_total];
        for &i in &self.labeled {
            is_labeled[i] = true;
        }
        let mut seen = vec![false; self.n_total];
        for &i in selected {
            if i >= self.n_total {
                return Err(invalid_argument(format!(
                    "index {i} out of range for pool of {}",
                    self.n_total
                )));
            }
            if is_labeled[i] {
                return Err(invalid_state(format!("index {i} is already labeled")));
            }
            if seen[i] {
                return Err(invalid_argument(format!("duplicate index {i} in selection")));
            }
            seen[i] = true;
        }
        for &i in selected {
            is_labeled[i] = true;
        }
        Ok(Self::from_mask(self.n_total, &is_labeled, self.cycle + 1))
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }
}

/// `make_pool` in free-function form.
pub fn make_pool(n_total: usize, initial_labeled: &[usize]) -> Result<PoolState> {
    PoolState::new(n_total, initial_labeled)
}

/// `commit_acquisition` in free-function form.
pub fn commit_acquisition(pool: &PoolState, selected: &[usize]) -> Result<PoolState> {
    pool.commit(selected)
}
