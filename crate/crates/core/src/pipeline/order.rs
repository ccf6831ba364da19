//! Lag-order selection by the normalized Akaike criterion.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;

use crate::error::{Error, Result, Stage};
use crate::scalar::Real;
use crate::series::TimeSeries;

use super::{fit, FitConfig, FitReport};

/// Diagonal jitter added when the residual covariance is not positive definite.
pub const NAIC_JITTER: f64 = 1e-12;

/// `log det(1/K sum_k e(k) e(k)^T) + 2 n_p / K` over the `K` residual columns.
/// The flag is set when the jitter was needed.
pub fn naic<T: Real>(residuals: &DMatrix<T>, n_params: usize) -> Result<(T, bool)> {
    let (n, k) = residuals.shape();
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "nAIC needs non-empty residuals".into(),
        ));
    }
    let kf = T::from_usize(k).expect("count fits scalar");
    let cov = residuals * residuals.transpose() / kf;
    let (logdet, jittered) = match cov.clone().cholesky() {
        Some(ch) => (log_det_cholesky(ch.l_dirty(), n), false),
        None => {
            let jittered = cov + DMatrix::identity(n, n) * T::lit(NAIC_JITTER);
            let ch = jittered.cholesky().ok_or_else(|| {
                Error::Numerical("residual covariance not positive semi-definite".into())
            })?;
            (log_det_cholesky(ch.l_dirty(), n), true)
        }
    };
    let penalty = T::lit(2.0 * n_params as f64) / kf;
    Ok((logdet + penalty, jittered))
}

fn log_det_cholesky<T: Real>(l: &DMatrix<T>, n: usize) -> T {
    (0..n).fold(T::zero(), |s, i| s + l[(i, i)].ln()) * T::lit(2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaicRow {
    pub order: usize,
    pub naic: f64,
    pub n_params: usize,
    pub jittered: bool,
}

#[derive(Debug, Clone)]
pub struct OrderSelection<T: Real> {
    pub best_order: usize,
    pub table: Vec<NaicRow>,
    /// The fit at the selected order.
    pub best_fit: FitReport<T>,
}

/// Fits every order in `orders` and keeps the smallest nAIC; ties go to the
/// smaller order.
pub fn select_order<T: Real>(
    x: &TimeSeries<T>,
    base: &FitConfig,
    orders: RangeInclusive<usize>,
) -> Result<OrderSelection<T>> {
    let (lo, hi) = (*orders.start(), *orders.end());
    let limit = x.n_samples() / x.n_nodes().max(1);
    if lo == 0 || lo > hi || hi >= limit {
        return Err(Error::InvalidArgument(format!(
            "order range {lo}..={hi} must lie inside 1..{limit}"
        ))
        .in_stage(Stage::OrderSelection));
    }
    let mut table = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<(f64, FitReport<T>)> = None;
    for m in orders {
        let report = fit(x, &base.with_order(m)).map_err(|e| e.in_stage(Stage::OrderSelection))?;
        let value = report.naic.as_f64();
        table.push(NaicRow {
            order: m,
            naic: value,
            n_params: report.n_params,
            jittered: report.naic_jittered,
        });
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, report));
        }
    }
    let (_, best_fit) = best.expect("non-empty order range");
    Ok(OrderSelection {
        best_order: best_fit.config.order,
        table,
        best_fit,
    })
}
