//! The three-stage estimator, order selection and the VAR-LiNGAM baseline.

mod baseline;
mod order;
mod predict;
mod stage1;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{var_lingam_baseline, var_lingam_n_params, BaselineResult, BASELINE_RIDGE};
pub use order::{naic, select_order, NaicRow, OrderSelection};
pub use predict::{causal_prediction_mse, structural_prediction_mse};
pub use stage1::{
    apply_stage1_design, build_stage1_problem, residuals_tilde, stage1_fit, stage1_objective,
    Stage1Output,
};

use crate::error::{Error, Result, Stage};
use crate::graph::{commutator_norm, graph_polynomial, vec, DagMatrix, PolyCoeffs};
use crate::lingam::{lingam_fit, LingamResult};
use crate::scalar::Real;
use crate::series::TimeSeries;
use crate::solvers::{lasso, LassoProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub order: usize,
    /// L1 weight on the first reduced-form filter.
    pub lambda1: f64,
    /// L1 weight on the polynomial coefficients.
    pub lambda2: f64,
    /// Weight of the pairwise commutator penalty.
    pub lambda3: f64,
    pub max_outer_iter: usize,
    pub outer_tol: f64,
    pub prune_thresh: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            order: 2,
            lambda1: 0.1,
            lambda2: 0.01,
            lambda3: 1.0,
            max_outer_iter: 50,
            outer_tol: 1e-6,
            prune_thresh: crate::lingam::DEFAULT_PRUNE_THRESH,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("prune_thresh", self.prune_thresh),
            ("outer_tol", self.outer_tol),
        ] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.max_outer_iter == 0 {
            return Err(Error::InvalidArgument(
                "max_outer_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_order(&self, order: usize) -> Self {
        Self {
            order,
            ..self.clone()
        }
    }
}

/// Lag filters: the reduced-form `Rt_i` from stage 1 and, after stage 2,
/// the structural `R_i = (I - A) Rt_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagFilterSet<T: Real> {
    rtilde: Vec<DMatrix<T>>,
    r: Option<Vec<DMatrix<T>>>,
}

impl<T: Real> LagFilterSet<T> {
    pub fn new(rtilde: Vec<DMatrix<T>>) -> Result<Self> {
        let Some(first) = rtilde.first() else {
            return Err(Error::InvalidArgument(
                "at least one lag filter required".into(),
            ));
        };
        let shape = first.shape();
        if shape.0 != shape.1 || rtilde.iter().any(|f| f.shape() != shape) {
            return Err(Error::dims(
                "LagFilterSet",
                format!("{shape:?} square"),
                "mixed shapes",
            ));
        }
        Ok(Self { rtilde, r: None })
    }

    pub fn zeros(n: usize, order: usize) -> Self {
        Self {
            rtilde: vec![DMatrix::zeros(n, n); order],
            r: None,
        }
    }

    pub fn order(&self) -> usize {
        self.rtilde.len()
    }

    pub fn rtilde(&self) -> &[DMatrix<T>] {
        &self.rtilde
    }

    pub fn r(&self) -> Option<&[DMatrix<T>]> {
        self.r.as_deref()
    }

    /// Fills `R_i = (I - A) Rt_i`.
    pub fn attach_structural(&mut self, dag: &DagMatrix<T>) {
        let lhs = dag.identity_minus();
        self.r = Some(self.rtilde.iter().map(|f| &lhs * f).collect());
    }

    /// Largest pairwise commutator norm of the reduced-form filters.
    pub fn max_commutator(&self) -> T {
        let mut worst = T::zero();
        for a in 0..self.rtilde.len() {
            for b in a + 1..self.rtilde.len() {
                worst = worst
                    .max(commutator_norm(&self.rtilde[a], &self.rtilde[b]).expect("same shapes"));
            }
        }
        worst
    }
}

/// Everything the estimator produces for one series.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T: Real> {
    pub config: FitConfig,
    pub dag: DagMatrix<T>,
    pub causal_order: Vec<usize>,
    pub coeffs: PolyCoeffs<T>,
    pub filters: LagFilterSet<T>,
    /// Stage-1 residuals `et`, `N x (K - M)`.
    pub residuals_tilde: DMatrix<T>,
    /// Disturbance estimates `e = (I - A) et`.
    pub residuals_e: DMatrix<T>,
    /// Residuals of the fitted structural model,
    /// `(I - A) x(k) - sum_i P_i(A, c) x(k-i)`; these feed the nAIC.
    pub residuals_model: DMatrix<T>,
    /// Stage-1 objective after every outer sweep.
    pub trace: Vec<T>,
    pub stage1_converged: bool,
    pub n_params: usize,
    pub naic: T,
    /// Set when the residual covariance needed a diagonal jitter.
    pub naic_jittered: bool,
    pub n_samples: usize,
}

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1: f64,
    pub stage2: f64,
    pub stage3: f64,
}

/// Free parameters of the model: `N(N-1)/2` for the DAG plus `M(M+3)/2`
/// polynomial coefficients.
pub const fn cgp_n_params(n: usize, order: usize) -> usize {
    n * (n - 1) / 2 + order * (order + 3) / 2
}

/// Stage 2: LiNGAM on the stage-1 residuals, `et = A et + e`.
pub fn stage2_fit<T: Real>(residuals: &DMatrix<T>, cfg: &FitConfig) -> Result<LingamResult<T>> {
    if residuals.is_empty() {
        return Err(Error::InvalidArgument(
            "stage 2 needs non-empty residuals".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let res = lingam_fit(residuals, T::lit(cfg.prune_thresh), &mut rng)?;
    debug_assert!(crate::graph::is_dag(
        res.dag.weights(),
        T::lit(crate::graph::NILPOTENCY_TOL)
    ));
    Ok(res)
}

/// Stage 3: per lag, `c_i = argmin 1/2 ||vec(R_i) - Q_i c_i||^2 + lambda2 ||c_i||_1`
/// with `Q_i = (vec(I), vec(A), ..., vec(A^i))` and `R_i = (I - A) Rt_i`.
pub fn stage3_fit<T: Real>(
    filters: &LagFilterSet<T>,
    dag: &DagMatrix<T>,
    cfg: &FitConfig,
) -> Result<PolyCoeffs<T>> {
    let n = dag.n();
    let m = filters.order();
    let lhs = dag.identity_minus();
    let mut powers = vec![DMatrix::<T>::identity(n, n)];
    for j in 1..=m {
        powers.push(&powers[j - 1] * dag.weights());
    }
    let mut coeffs = PolyCoeffs::zeros(m);
    for i in 1..=m {
        let r_i = &lhs * &filters.rtilde()[i - 1];
        let mut q = DMatrix::zeros(n * n, i + 1);
        for (j, p) in powers.iter().take(i + 1).enumerate() {
            q.set_column(j, &vec(p));
        }
        let sol = lasso(&LassoProblem::new(q, vec(&r_i), T::lit(cfg.lambda2)))?;
        coeffs.lag_mut(i).copy_from_slice(sol.coef.as_slice());
    }
    Ok(coeffs)
}

/// `(I - A) x(k) - sum_i P_i(A, c) x(k-i)` for `k = M..K-1`.
pub fn model_residuals<T: Real>(
    x: &DMatrix<T>,
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
) -> Result<DMatrix<T>> {
    let m = coeffs.order();
    let (n, k) = x.shape();
    if n != dag.n() {
        return Err(Error::dims(
            "model_residuals",
            format!("{} rows", dag.n()),
            format!("{n} rows"),
        ));
    }
    if k <= m {
        return Err(Error::InsufficientData {
            samples: k,
            needed: m + 1,
        });
    }
    let len = k - m;
    let mut res = dag.identity_minus() * x.columns(m, len);
    for i in 1..=m {
        let p = graph_polynomial(dag.weights(), coeffs.lag(i))?;
        res -= p * x.columns(m - i, len);
    }
    Ok(res)
}

/// Runs all three stages on `x`.
pub fn fit<T: Real>(x: &TimeSeries<T>, cfg: &FitConfig) -> Result<FitReport<T>> {
    fit_timed(x, cfg).map(|(r, _)| r)
}

/// [`fit`], also returning per-stage wall-clock timings.
pub fn fit_timed<T: Real>(
    x: &TimeSeries<T>,
    cfg: &FitConfig,
) -> Result<(FitReport<T>, StageTimings)> {
    let mut path = fit_path_timed(x, cfg, &[cfg.lambda2])?;
    Ok(path.pop().expect("one lambda2 value"))
}

/// Fits once per `lambda2` value, sharing stages 1 and 2 (which do not
/// depend on it). `cfg.lambda2` is ignored.
pub fn fit_path<T: Real>(
    x: &TimeSeries<T>,
    cfg: &FitConfig,
    lambda2s: &[f64],
) -> Result<Vec<FitReport<T>>> {
    Ok(fit_path_timed(x, cfg, lambda2s)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

fn fit_path_timed<T: Real>(
    x: &TimeSeries<T>,
    cfg: &FitConfig,
    lambda2s: &[f64],
) -> Result<Vec<(FitReport<T>, StageTimings)>> {
    if lambda2s.is_empty() {
        return Err(Error::InvalidArgument(
            "fit_path needs at least one lambda2".into(),
        ));
    }
    for &l2 in lambda2s {
        FitConfig {
            lambda2: l2,
            ..cfg.clone()
        }
        .validate()?;
    }
    let t0 = Instant::now();
    let s1 = stage1_fit(x, cfg).map_err(|e| e.in_stage(Stage::LagFilters))?;
    let t1 = Instant::now();
    let s2 = stage2_fit(&s1.residuals, cfg).map_err(|e| e.in_stage(Stage::Lingam))?;
    let t2 = Instant::now();

    let mut filters = s1.filters;
    filters.attach_structural(&s2.dag);
    let residuals_e = s2.dag.identity_minus() * &s1.residuals;
    let n_params = cgp_n_params(x.n_nodes(), cfg.order);
    let mut out = Vec::with_capacity(lambda2s.len());
    for &l2 in lambda2s {
        let cfg = FitConfig {
            lambda2: l2,
            ..cfg.clone()
        };
        let t3 = Instant::now();
        let coeffs =
            stage3_fit(&filters, &s2.dag, &cfg).map_err(|e| e.in_stage(Stage::Coefficients))?;
        let t4 = Instant::now();
        let residuals_model = model_residuals(x.data(), &s2.dag, &coeffs)?;
        let (naic_value, naic_jittered) =
            naic(&residuals_model, n_params).map_err(|e| e.in_stage(Stage::OrderSelection))?;
        let report = FitReport {
            config: cfg,
            dag: s2.dag.clone(),
            causal_order: s2.causal_order.clone(),
            coeffs,
            filters: filters.clone(),
            residuals_tilde: s1.residuals.clone(),
            residuals_e: residuals_e.clone(),
            residuals_model,
            trace: s1.trace.clone(),
            stage1_converged: s1.converged,
            n_params,
            naic: naic_value,
            naic_jittered,
            n_samples: x.n_samples(),
        };
        let timings = StageTimings {
            stage1: (t1 - t0).as_secs_f64(),
            stage2: (t2 - t1).as_secs_f64(),
            stage3: (t4 - t3).as_secs_f64(),
        };
        out.push((report, timings));
    }
    Ok(out)
}

impl<T: Real> FitReport<T> {
    /// `P_i(A, c)` from the estimated DAG and coefficients.
    pub fn polynomial_filters(&self) -> Vec<DMatrix<T>> {
        (1..=self.coeffs.order())
            .map(|i| graph_polynomial(self.dag.weights(), self.coeffs.lag(i)).expect("square DAG"))
            .collect()
    }

    /// One-step causal forecast `(I - A)^{-1} sum_i P_i(A, c) x(k-i)` from
    /// the `M` most recent samples (most recent first).
    pub fn forecast(&self, history: &[DVector<T>]) -> DVector<T> {
        let inv = self.dag.inverse_identity_minus();
        let mut acc = DVector::zeros(self.dag.n());
        for (p, xk) in self.polynomial_filters().iter().zip(history) {
            acc += p * xk;
        }
        inv * acc
    }
}
