use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, DacsError, Result};

/// Tolerance on |‖row‖₂ − 1| for a matrix flagged unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Row-major n×d embedding store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    unit_norm: bool,
}

impl FeatureMatrix {
    /// Build a matrix from row-major data. The unit-norm flag is set only if
    /// every row passes the norm check.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid_argument(format!("empty matrix ({n}x{d})")));
        }
        if data.len() != n * d {
            return Err(invalid_argument(format!(
                "expected {} values for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DacsError::DegenerateInput {
                row: pos / d,
                reason: "non-finite value".into(),
            });
        }
        let mut m = FeatureMatrix {
            n,
            d,
            data,
            unit_norm: false,
        };
        m.unit_norm = m.rows_are_unit();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid_argument("ragged rows"));
        }
        FeatureMatrix::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Copy the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid_argument("cannot select zero rows"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(invalid_argument(format!("row {i} out of range (n={})", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(FeatureMatrix {
            n: indices.len(),
            d: self.d,
            data,
            unit_norm: self.unit_norm,
        })
    }

    /// Divide every row by its L2 norm.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.d).enumerate() {
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(DacsError::DegenerateInput {
                    row: i,
                    reason: "zero-norm row cannot be normalized".into(),
                });
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(FeatureMatrix {
            n: self.n,
            d: self.d,
            data,
            unit_norm: true,
        })
    }

    fn rows_are_unit(&self) -> bool {
        self.rows().all(|r| (l2_norm(r) - 1.0).abs() <= UNIT_NORM_TOL)
    }

    pub(crate) fn require_unit_norm(&self, what: &str) -> Result<()> {
        if self.unit_norm {
            Ok(())
        } else {
            Err(DacsError::InvalidState(format!("{what} requires unit-norm features")))
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
