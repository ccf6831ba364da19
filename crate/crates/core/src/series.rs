//! Multivariate time series stored node-by-time.

use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Observation matrix `X` with `N` rows (nodes) and `K` columns (time);
/// column `k` is the graph signal `x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T: Real> {
    names: Vec<String>,
    data: DMatrix<T>,
}

impl<T: Real> TimeSeries<T> {
    /// Wraps `data` with default node names `x1, x2, ...`.
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        let names = default_names(data.nrows());
        Self::with_names(names, data)
    }

    pub fn with_names(names: Vec<String>, data: DMatrix<T>) -> Result<Self> {
        if names.len() != data.nrows() {
            return Err(Error::dims("TimeSeries names", data.nrows(), names.len()));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "time series needs at least one sample".into(),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at node {}, time {}",
                pos % data.nrows(),
                pos / data.nrows()
            )));
        }
        Ok(Self { names, data })
    }

    pub fn n_nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }

    /// Contiguous time block `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_samples() {
            return Err(Error::InvalidArgument(format!(
                "time range {range:?} outside 0..{}",
                self.n_samples()
            )));
        }
        Ok(Self {
            names: self.names.clone(),
            data: self.data.columns_range(range).into_owned(),
        })
    }

    /// `X_m = (x(m), ..., x(m + len - 1))`.
    pub fn lag_block(&self, m: usize, len: usize) -> DMatrixView<'_, T> {
        self.data.columns(m, len)
    }

    /// Contiguous train/validation/test blocks with the given leading
    /// fractions; the test block takes the remainder.
    pub fn split(&self, train: f64, validation: f64) -> Result<Split<T>> {
        let k = self.n_samples();
        let n_train = (train * k as f64).round() as usize;
        let n_val = (validation * k as f64).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= k {
            return Err(Error::InvalidArgument(format!(
                "cannot split {k} samples with fractions {train}/{validation}"
            )));
        }
        Ok(Split {
            train: self.slice(0..n_train)?,
            validation: self.slice(n_train..n_train + n_val)?,
            test: self.slice(n_train + n_val..k)?,
        })
    }

    /// The 60/20/20 contiguous split used for hyperparameter selection.
    pub fn standard_split(&self) -> Result<Split<T>> {
        self.split(0.6, 0.2)
    }

    /// Relabels nodes so that new node `a` is old node `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = DMatrix::from_fn(self.n_nodes(), self.n_samples(), |r, c| {
            self.data[(perm[r], c)]
        });
        let names = perm.iter().map(|&p| self.names[p].clone()).collect();
        Self { names, data }
    }
}

#[derive(Debug, Clone)]
pub struct Split<T: Real> {
    pub train: TimeSeries<T>,
    pub validation: TimeSeries<T>,
    pub test: TimeSeries<T>,
}

pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}
