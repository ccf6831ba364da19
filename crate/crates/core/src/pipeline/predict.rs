//! One-step prediction errors of a fitted (or true) model on a series.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{DagMatrix, PolyCoeffs};
use crate::scalar::Real;
use crate::series::TimeSeries;

fn check<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    x: &TimeSeries<T>,
    start: usize,
) -> Result<()> {
    if dag.n() != x.n_nodes() {
        return Err(Error::dims("prediction", dag.n(), x.n_nodes()));
    }
    if start < coeffs.order() || start >= x.n_samples() {
        return Err(Error::InsufficientData {
            samples: x.n_samples(),
            needed: start.max(coeffs.order()),
        });
    }
    Ok(())
}

fn mean_sq<T: Real>(
    x: &TimeSeries<T>,
    start: usize,
    predict: impl Fn(usize) -> nalgebra::DVector<T>,
) -> f64 {
    let data = x.data();
    let n = x.n_nodes() as f64;
    let count = x.n_samples() - start;
    let total: f64 = (start..x.n_samples())
        .map(|k| (data.column(k) - predict(k)).norm_squared().as_f64() / n)
        .sum();
    total / count as f64
}

/// Mean over `k >= start` of `1/N ||x(k) - A x(k) - sum_i P_i(A,c) x(k-i)||^2`.
/// The predictor includes the contemporaneous sample, so with the true
/// parameters the error is the disturbance itself.
pub fn structural_prediction_mse<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    x: &TimeSeries<T>,
    start: usize,
) -> Result<f64> {
    check(dag, coeffs, x, start)?;
    let filters = coeffs.filters(dag.weights())?;
    let data = x.data();
    Ok(mean_sq(x, start, |k| {
        let mut p = dag.weights() * data.column(k);
        for (lag, f) in filters.iter().enumerate() {
            p += f * data.column(k - lag - 1);
        }
        p
    }))
}

/// Mean over `k >= start` of `1/N ||x(k) - (I-A)^{-1} sum_i P_i(A,c) x(k-i)||^2`,
/// the causal one-step-ahead forecast error.
pub fn causal_prediction_mse<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    x: &TimeSeries<T>,
    start: usize,
) -> Result<f64> {
    check(dag, coeffs, x, start)?;
    let inv = dag.inverse_identity_minus();
    let reduced: Vec<DMatrix<T>> = coeffs
        .filters(dag.weights())?
        .into_iter()
        .map(|p| &inv * p)
        .collect();
    let data = x.data();
    Ok(mean_sq(x, start, |k| {
        let mut p = nalgebra::DVector::zeros(x.n_nodes());
        for (lag, f) in reduced.iter().enumerate() {
            p += f * data.column(k - lag - 1);
        }
        p
    }))
}
