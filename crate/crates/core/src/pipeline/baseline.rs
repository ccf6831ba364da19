//! Two-step VAR-LiNGAM: a ridge-stabilized least-squares VAR, LiNGAM on its
//! residuals for the instantaneous matrix, then `A_i = (I - A_0) At_i`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result, Stage};
use crate::graph::DagMatrix;
use crate::lingam::lingam_fit;
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::stage1::check_length;

pub const BASELINE_RIDGE: f64 = 1e-6;

/// `N(N-1)/2 + M N^2` free parameters.
pub const fn var_lingam_n_params(n: usize, order: usize) -> usize {
    n * (n - 1) / 2 + order * n * n
}

#[derive(Debug, Clone)]
pub struct BaselineResult<T: Real> {
    pub a0: DagMatrix<T>,
    /// Structural lag matrices `A_1, ..., A_M`.
    pub lags: Vec<DMatrix<T>>,
    /// Reduced-form VAR matrices before the instantaneous correction.
    pub reduced: Vec<DMatrix<T>>,
    pub residuals: DMatrix<T>,
    pub n_params: usize,
}

pub fn var_lingam_baseline<T: Real, R: Rng + ?Sized>(
    x: &TimeSeries<T>,
    order: usize,
    ridge: f64,
    thresh: f64,
    rng: &mut R,
) -> Result<BaselineResult<T>> {
    check_length(x, order).map_err(|e| e.in_stage(Stage::Baseline))?;
    let n = x.n_nodes();
    let len = x.n_samples() - order;
    // regressors stacked lag 1 first
    let mut z = DMatrix::<T>::zeros(order * n, len);
    for i in 1..=order {
        z.view_mut(((i - 1) * n, 0), (n, len))
            .copy_from(&x.lag_block(order - i, len));
    }
    let target = x.lag_block(order, len);
    let gram = &z * z.transpose() + DMatrix::identity(order * n, order * n) * T::lit(ridge);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical("VAR normal equations not positive definite".into())
            .in_stage(Stage::Baseline)
    })?;
    // coef^T = gram^{-1} z target^T
    let coef = chol.solve(&(&z * target.transpose())).transpose();
    let residuals = target - &coef * &z;
    let reduced: Vec<DMatrix<T>> = (0..order)
        .map(|i| coef.columns(i * n, n).into_owned())
        .collect();
    let lin =
        lingam_fit(&residuals, T::lit(thresh), rng).map_err(|e| e.in_stage(Stage::Baseline))?;
    let lhs = lin.dag.identity_minus();
    let lags = reduced.iter().map(|a| &lhs * a).collect();
    Ok(BaselineResult {
        a0: lin.dag,
        lags,
        reduced,
        residuals,
        n_params: var_lingam_n_params(n, order),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        assert_eq!(var_lingam_n_params(5, 2), 60);
    }
}
