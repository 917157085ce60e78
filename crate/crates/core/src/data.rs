//! Partially observed matrices and the PMF hyperparameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `N × M` real matrix with an observation mask.
///
/// Values under a false mask bit are zeroed on construction and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    transposed: bool,
}

impl ObservedMatrix {
    /// Wraps `values` and `mask` as given. Columns may be empty; use
    /// [`ObservedMatrix::ingest`] for user data.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::InvalidInput(format!(
                "value shape {:?} does not match mask shape {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("matrix has no rows or columns".into()));
        }
        let mut values = values;
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if !m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::InvalidInput(format!("observed value {v} is not finite")));
            }
        }
        Ok(Self {
            values,
            mask,
            transposed: false,
        })
    }

    /// Fully observed matrix.
    pub fn dense(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Validates user data: transposes so that `N ≤ M` and rejects columns
    /// without observations.
    pub fn ingest(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        let mut x = Self::new(values, mask)?;
        if x.n_rows() > x.n_cols() {
            x = Self {
                values: x.values.transpose(),
                mask: x.mask.transpose(),
                transposed: true,
            };
        }
        if let Some(col) = (0..x.n_cols()).find(|&c| x.observed_count(c) == 0) {
            return Err(Error::InvalidInput(format!("column {col} has no observed entries")));
        }
        Ok(x)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Whether [`ObservedMatrix::ingest`] transposed the input.
    pub fn transposed(&self) -> bool {
        self.transposed
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    /// Observed value, or `None` under the mask.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.mask[(row, col)].then(|| self.values[(row, col)])
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    /// Values with unobserved entries set to zero.
    pub fn zero_filled(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn observed_count(&self, col: usize) -> usize {
        self.mask.column(col).iter().filter(|&&m| m).count()
    }

    pub fn total_observed(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Observed `(row, value)` pairs of one column.
    pub fn column_entries(&self, col: usize) -> Vec<(usize, f64)> {
        (0..self.n_rows())
            .filter(|&r| self.mask[(r, col)])
            .map(|r| (r, self.values[(r, col)]))
            .collect()
    }

    /// Observed `(col, value)` pairs of one row.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        (0..self.n_cols())
            .filter(|&c| self.mask[(row, c)])
            .map(|c| (c, self.values[(row, c)]))
            .collect()
    }

    /// Iterator over all observed `(row, col, value)` triples, column-major.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n_rows();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(k, _)| (k % n, k / n, self.values[k]))
    }

    /// Per-row mean over observed entries; zero for rows with none.
    pub fn row_means(&self) -> DVector<f64> {
        DVector::from_fn(self.n_rows(), |r, _| {
            let e = self.row_entries(r);
            if e.is_empty() {
                0.0
            } else {
                e.iter().map(|(_, v)| v).sum::<f64>() / e.len() as f64
            }
        })
    }

    /// Copy with the listed entries unobserved. Columns may become empty.
    pub fn hold_out(&self, entries: &[(usize, usize)]) -> Result<Self> {
        let mut out = self.clone();
        for &(r, c) in entries {
            if r >= self.n_rows() || c >= self.n_cols() {
                return Err(Error::InvalidInput(format!(
                    "held-out entry ({r}, {c}) is outside the matrix"
                )));
            }
            out.mask[(r, c)] = false;
            out.values[(r, c)] = 0.0;
        }
        Ok(out)
    }
}

/// Noise and prior variances of the PMF model `x ~ N(⟨u, v⟩, σ²)`,
/// `u ~ N(0, σ_u²I)`, `v ~ N(0, σ_v²I)`, plus the latent rank `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfHyperParams {
    pub sigma2: f64,
    pub sigma2_u: f64,
    pub sigma2_v: f64,
    pub d: usize,
}

impl PmfHyperParams {
    pub fn new(sigma2: f64, sigma2_u: f64, sigma2_v: f64, d: usize) -> Result<Self> {
        for (name, v) in [("sigma2", sigma2), ("sigma2_u", sigma2_u), ("sigma2_v", sigma2_v)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if d == 0 {
            return Err(Error::InvalidInput("latent rank must be at least 1".into()));
        }
        Ok(Self {
            sigma2,
            sigma2_u,
            sigma2_v,
            d,
        })
    }

    /// `β_v = σ²/σ_v²`.
    pub fn beta_v(&self) -> f64 {
        self.sigma2 / self.sigma2_v
    }
}

impl Default for PmfHyperParams {
    /// The synthetic-data settings `σ_u² = σ_v² = 0.05`, `σ² = 0.01`, `D = 5`.
    fn default() -> Self {
        Self {
            sigma2: 0.01,
            sigma2_u: 0.05,
            sigma2_v: 0.05,
            d: 5,
        }
    }
}
