//! Stage 1: alternating block recovery of the reduced-form lag filters
//! `Rt_1, ..., Rt_M` under an L1 penalty on `Rt_1` and a commutativity
//! penalty between every pair of filters.
//!
//! With `X_m = (x(m), ..., x(m+K-M-1))` and `r = vec(Rt_i)`, the block
//! problem for lag `i` is `||Psi_i r - yt_i||^2 (+ lambda1 ||r||_1 for i = 1)`
//! where `Psi_i` stacks `(sqrt(2)/2) (X_{M-i}^T kron I)` over one block
//! `sqrt(lambda3) (Rt_j^T kron I - I kron Rt_j)` per `j != i`.
//!
//! [`build_stage1_problem`] materializes that system. The solver instead uses
//! an equivalent compact form: with the thin QR factorization
//! `X_{M-i}^T = Q R`, the data block becomes `(sqrt(2)/2)(R kron I)` with target
//! `(sqrt(2)/2) vec(Y_i Q)`. Both forms have the same minimizers and the same
//! singular values, but the compact one has `N^2` data rows instead of
//! `N (K - M)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{kron_vec_apply, unvec, vec};
use crate::scalar::Real;
use crate::series::TimeSeries;
use crate::solvers::{lasso, pinv_solve, LassoProblem};

use super::{FitConfig, LagFilterSet};

/// Relative objective increase that counts as a divergent sweep.
const DIVERGENCE_RTOL: f64 = 1e-6;
const DIVERGENCE_SWEEPS: usize = 3;
/// Objective changes below this fraction of the starting objective are
/// round-off, both for divergence and for convergence checks.
const OBJECTIVE_FLOOR: f64 = 1e-12;

pub(crate) fn check_length<T: Real>(x: &TimeSeries<T>, order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if x.n_samples() <= order {
        return Err(Error::InsufficientData {
            samples: x.n_samples(),
            needed: order,
        });
    }
    Ok(())
}

fn data_block_scale<T: Real>() -> T {
    T::lit(std::f64::consts::FRAC_1_SQRT_2)
}

/// Target residual `Y_i = X_M - sum_{j != i} Rt_j X_{M-j}`.
fn partial_residual<T: Real>(x: &TimeSeries<T>, filters: &[DMatrix<T>], skip: usize) -> DMatrix<T> {
    let m = filters.len();
    let len = x.n_samples() - m;
    let mut y = x.lag_block(m, len).into_owned();
    for (idx, f) in filters.iter().enumerate() {
        let j = idx + 1;
        if j != skip {
            y.gemm(-T::one(), f, &x.lag_block(m - j, len), T::one());
        }
    }
    y
}

/// Explicit `(Psi_i, yt_i)` for lag `i` (1-based), with all Kronecker
/// products materialized.
pub fn build_stage1_problem<T: Real>(
    x: &TimeSeries<T>,
    filters: &LagFilterSet<T>,
    i: usize,
    cfg: &FitConfig,
) -> Result<(DMatrix<T>, DVector<T>)> {
    let m = filters.order();
    check_length(x, m)?;
    check_lag(i, m)?;
    let n = x.n_nodes();
    let len = x.n_samples() - m;
    let nn = n * n;
    let id = DMatrix::<T>::identity(n, n);
    let scale = data_block_scale::<T>();
    let sqrt_l3 = T::lit(cfg.lambda3.sqrt());

    let rows = n * len + (m - 1) * nn;
    let mut design = DMatrix::zeros(rows, nn);
    let mut target = DVector::zeros(rows);
    let b_i = x.lag_block(m - i, len).transpose().kronecker(&id);
    design
        .view_mut((0, 0), (n * len, nn))
        .copy_from(&(b_i * scale));
    let y = partial_residual(x, filters.rtilde(), i);
    target.rows_mut(0, n * len).copy_from(&(vec(&y) * scale));

    let mut row = n * len;
    for (idx, rj) in filters.rtilde().iter().enumerate() {
        if idx + 1 == i {
            continue;
        }
        let phi = rj.transpose().kronecker(&id) - id.kronecker(rj);
        design
            .view_mut((row, 0), (nn, nn))
            .copy_from(&(phi * sqrt_l3));
        row += nn;
    }
    Ok((design, target))
}

/// `Psi_i r` without forming any Kronecker product.
pub fn apply_stage1_design<T: Real>(
    x: &TimeSeries<T>,
    filters: &LagFilterSet<T>,
    i: usize,
    cfg: &FitConfig,
    r: &DVector<T>,
) -> Result<DVector<T>> {
    let m = filters.order();
    check_length(x, m)?;
    check_lag(i, m)?;
    let n = x.n_nodes();
    if r.len() != n * n {
        return Err(Error::dims("apply_stage1_design", n * n, r.len()));
    }
    let len = x.n_samples() - m;
    let id = DMatrix::<T>::identity(n, n);
    let rmat = unvec(r, n, n);
    let x_lag = x.lag_block(m - i, len).into_owned();
    let mut parts = vec![kron_vec_apply(&x_lag, &id, &rmat)? * data_block_scale::<T>()];
    let sqrt_l3 = T::lit(cfg.lambda3.sqrt());
    for (idx, rj) in filters.rtilde().iter().enumerate() {
        if idx + 1 == i {
            continue;
        }
        let phi_r = kron_vec_apply(rj, &id, &rmat)? - kron_vec_apply(&id, rj, &rmat)?;
        parts.push(phi_r * sqrt_l3);
    }
    let total = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(total);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(&p);
        at += p.len();
    }
    Ok(out)
}

fn check_lag(i: usize, m: usize) -> Result<()> {
    if i == 0 || i > m {
        return Err(Error::InvalidArgument(format!("lag {i} outside 1..={m}")));
    }
    Ok(())
}

/// Precomputed per-lag factorizations for the compact block problems.
pub(crate) struct CompactSystem<T: Real> {
    n: usize,
    order: usize,
    /// `R` factor of the thin QR of `X_{M-i}^T`, indexed by lag `i - 1`.
    r_factor: Vec<DMatrix<T>>,
    /// `proj[i-1][m] = X_m Q_{M-i}`.
    proj: Vec<Vec<DMatrix<T>>>,
}

impl<T: Real> CompactSystem<T> {
    pub(crate) fn new(x: &TimeSeries<T>, order: usize) -> Result<Self> {
        check_length(x, order)?;
        let n = x.n_nodes();
        let len = x.n_samples() - order;
        let mut r_factor = Vec::with_capacity(order);
        let mut proj = Vec::with_capacity(order);
        for i in 1..=order {
            let qr = x.lag_block(order - i, len).transpose().qr();
            let q = qr.q();
            r_factor.push(qr.r());
            proj.push((0..=order).map(|m| x.lag_block(m, len) * &q).collect());
        }
        Ok(Self {
            n,
            order,
            r_factor,
            proj,
        })
    }

    /// Compact `(Psi_i, yt_i)` for lag `i` given the current filters.
    pub(crate) fn block(
        &self,
        filters: &[DMatrix<T>],
        i: usize,
        lambda3: f64,
    ) -> (DMatrix<T>, DVector<T>) {
        let n = self.n;
        let nn = n * n;
        let m = self.order;
        let id = DMatrix::<T>::identity(n, n);
        let scale = data_block_scale::<T>();
        let rf = &self.r_factor[i - 1];
        let data_rows = rf.nrows() * n;
        let rows = data_rows + (m - 1) * nn;
        let mut design = DMatrix::zeros(rows, nn);
        let mut target = DVector::zeros(rows);

        design
            .view_mut((0, 0), (data_rows, nn))
            .copy_from(&(rf.kronecker(&id) * scale));
        let proj = &self.proj[i - 1];
        let mut yq = proj[m].clone();
        for (idx, f) in filters.iter().enumerate() {
            let j = idx + 1;
            if j != i {
                yq.gemm(-T::one(), f, &proj[m - j], T::one());
            }
        }
        target.rows_mut(0, data_rows).copy_from(&(vec(&yq) * scale));

        let sqrt_l3 = T::lit(lambda3.sqrt());
        let mut row = data_rows;
        for (idx, rj) in filters.iter().enumerate() {
            if idx + 1 == i {
                continue;
            }
            let phi = rj.transpose().kronecker(&id) - id.kronecker(rj);
            design
                .view_mut((row, 0), (nn, nn))
                .copy_from(&(phi * sqrt_l3));
            row += nn;
        }
        (design, target)
    }
}

/// Penalized stage-1 objective:
/// `1/2 ||X_M - sum_i Rt_i X_{M-i}||_F^2 + lambda1 ||vec(Rt_1)||_1
///  + lambda3 sum_{i<j} ||[Rt_i, Rt_j]||_F^2`.
pub fn stage1_objective<T: Real>(
    x: &TimeSeries<T>,
    filters: &[DMatrix<T>],
    lambda1: f64,
    lambda3: f64,
) -> T {
    let resid = residuals_tilde(x, filters);
    let mut obj = resid.norm_squared() * T::lit(0.5);
    if let Some(r1) = filters.first() {
        obj += T::lit(lambda1) * r1.iter().fold(T::zero(), |s, v| s + v.abs());
    }
    let l3 = T::lit(lambda3);
    for a in 0..filters.len() {
        for b in a + 1..filters.len() {
            let c = &filters[a] * &filters[b] - &filters[b] * &filters[a];
            obj += l3 * c.norm_squared();
        }
    }
    obj
}

/// `et(k) = x(k) - sum_i Rt_i x(k-i)` for `k = M..K-1`.
pub fn residuals_tilde<T: Real>(x: &TimeSeries<T>, filters: &[DMatrix<T>]) -> DMatrix<T> {
    partial_residual(x, filters, 0)
}

#[derive(Debug, Clone)]
pub struct Stage1Output<T: Real> {
    pub filters: LagFilterSet<T>,
    pub residuals: DMatrix<T>,
    /// Objective after every outer sweep.
    pub trace: Vec<T>,
    pub converged: bool,
}

/// Alternating minimization from `Rt_i = 0`: lag 1 by lasso, lags `i >= 2`
/// by the pseudo-inverse closed form, until the relative objective change
/// drops below `outer_tol` or `max_outer_iter` sweeps have run.
pub fn stage1_fit<T: Real>(x: &TimeSeries<T>, cfg: &FitConfig) -> Result<Stage1Output<T>> {
    cfg.validate()?;
    let m = cfg.order;
    check_length(x, m)?;
    let n = x.n_nodes();
    if x.n_samples() <= m * n {
        log::warn!(
            "stage1_fit: {} samples for order {m} with {n} nodes; the lag filters are poorly determined",
            x.n_samples()
        );
    }
    let system = CompactSystem::new(x, m)?;
    let mut filters = vec![DMatrix::<T>::zeros(n, n); m];
    let mut prev = stage1_objective(x, &filters, cfg.lambda1, cfg.lambda3);
    let floor = (prev * T::lit(OBJECTIVE_FLOOR)).max(T::lit(f64::MIN_POSITIVE));
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rising = 0;
    for _ in 0..cfg.max_outer_iter {
        for i in 1..=m {
            let (design, target) = system.block(&filters, i, cfg.lambda3);
            let sol = if i == 1 {
                // the block objective is ||Psi r - yt||^2 + lambda1 ||r||_1; lasso halves it
                let prob = LassoProblem::new(design, target, T::lit(cfg.lambda1 / 2.0))
                    .with_warm_start(vec(&filters[0]));
                lasso(&prob)?.coef
            } else {
                pinv_solve(&design, &target)?
            };
            filters[i - 1] = unvec(&sol, n, n);
        }
        let obj = stage1_objective(x, &filters, cfg.lambda1, cfg.lambda3);
        trace.push(obj);
        let scale = prev.abs().max(floor);
        if obj > prev + scale * T::lit(DIVERGENCE_RTOL) + floor {
            rising += 1;
            if rising >= DIVERGENCE_SWEEPS {
                return Err(Error::Divergence(format!(
                    "stage-1 objective rose for {DIVERGENCE_SWEEPS} consecutive sweeps (last {obj})"
                )));
            }
        } else {
            rising = 0;
        }
        let rel = (prev - obj).abs() / scale;
        prev = obj;
        if rel < T::lit(cfg.outer_tol) {
            converged = true;
            break;
        }
    }
    let residuals = residuals_tilde(x, &filters);
    Ok(Stage1Output {
        filters: LagFilterSet::new(filters)?,
        residuals,
        trace,
        converged,
    })
}
