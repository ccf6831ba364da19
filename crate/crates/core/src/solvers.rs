//! Least-squares kernels: L1-regularized least squares by cyclic coordinate
//! descent and minimum-norm least squares through the SVD.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_ITER: usize = 10_000;
/// KKT residual above which an exhausted iteration budget is an error.
pub const LASSO_KKT_LIMIT: f64 = 1e-4;
/// Relative singular-value cutoff of [`pinv_solve`].
pub const PINV_RCOND: f64 = 1e-10;

/// `min_w 1/2 ||D w - t||^2 + lambda ||w||_1`.
#[derive(Debug, Clone)]
pub struct LassoProblem<T: Real> {
    pub design: DMatrix<T>,
    pub target: DVector<T>,
    pub lambda: T,
    pub tol: T,
    pub max_iter: usize,
    pub warm_start: Option<DVector<T>>,
}

impl<T: Real> LassoProblem<T> {
    pub fn new(design: DMatrix<T>, target: DVector<T>, lambda: T) -> Self {
        Self {
            design,
            target,
            lambda,
            tol: T::lit(LASSO_TOL),
            max_iter: LASSO_MAX_ITER,
            warm_start: None,
        }
    }

    pub fn with_warm_start(mut self, w: DVector<T>) -> Self {
        self.warm_start = Some(w);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.target.len() {
            return Err(Error::dims("lasso", self.design.nrows(), self.target.len()));
        }
        if !(self.lambda >= T::zero()) {
            return Err(Error::InvalidArgument(
                "lasso lambda must be non-negative".into(),
            ));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != self.design.ncols() {
                return Err(Error::dims(
                    "lasso warm start",
                    self.design.ncols(),
                    w.len(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution<T: Real> {
    pub coef: DVector<T>,
    /// Largest violation of the subgradient optimality conditions.
    pub kkt_residual: T,
    pub sweeps: usize,
}

#[inline]
pub fn soft_threshold<T: Real>(x: T, lambda: T) -> T {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        T::zero()
    }
}

pub fn lasso<T: Real>(prob: &LassoProblem<T>) -> Result<LassoSolution<T>> {
    prob.validate()?;
    let gram = prob.design.tr_mul(&prob.design);
    let corr = prob.design.tr_mul(&prob.target);
    lasso_gram(
        &gram,
        &corr,
        prob.lambda,
        prob.tol,
        prob.max_iter,
        prob.warm_start.clone(),
    )
}

/// Coordinate descent on the quadratic form `1/2 w'Gw - b'w + lambda ||w||_1`,
/// which is the lasso objective up to a constant when `G = D'D` and `b = D't`.
///
/// Coordinates with `G_jj == 0` are held at zero.
pub fn lasso_gram<T: Real>(
    gram: &DMatrix<T>,
    corr: &DVector<T>,
    lambda: T,
    tol: T,
    max_iter: usize,
    warm_start: Option<DVector<T>>,
) -> Result<LassoSolution<T>> {
    let q = corr.len();
    if gram.shape() != (q, q) {
        return Err(Error::dims(
            "lasso_gram",
            format!("{q}x{q}"),
            format!("{:?}", gram.shape()),
        ));
    }
    let mut w = warm_start.unwrap_or_else(|| DVector::zeros(q));
    let zero_col: Vec<bool> = (0..q).map(|j| gram[(j, j)] <= T::zero()).collect();
    for j in 0..q {
        if zero_col[j] {
            w[j] = T::zero();
        }
    }
    // gw = G w, maintained incrementally
    let mut gw = gram * &w;
    let mut prev_obj = quad_objective(&w, &gw, corr, lambda);
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        let mut max_step = T::zero();
        for j in 0..q {
            if zero_col[j] {
                continue;
            }
            let gjj = gram[(j, j)];
            let old = w[j];
            let rho = corr[j] - gw[j] + gjj * old;
            let new = soft_threshold(rho, lambda) / gjj;
            let delta = new - old;
            if delta != T::zero() {
                w[j] = new;
                gw.axpy(delta, &gram.column(j), T::one());
                max_step = max_step.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let obj = quad_objective(&w, &gw, corr, lambda);
            let slack = T::lit(1e-9) * (T::one() + prev_obj.abs());
            debug_assert!(
                obj <= prev_obj + slack,
                "lasso objective increased: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }
        if max_step < tol {
            break;
        }
    }
    let kkt = kkt_residual(&w, &(gram * &w), corr, lambda, &zero_col);
    if sweeps >= max_iter && kkt > T::lit(LASSO_KKT_LIMIT) {
        return Err(Error::NonConvergence {
            what: "lasso coordinate descent",
            residual: kkt.as_f64(),
        });
    }
    Ok(LassoSolution {
        coef: w,
        kkt_residual: kkt,
        sweeps,
    })
}

fn quad_objective<T: Real>(w: &DVector<T>, gw: &DVector<T>, corr: &DVector<T>, lambda: T) -> T {
    w.dot(gw) * T::lit(0.5) - corr.dot(w) + lambda * w.iter().fold(T::zero(), |s, x| s + x.abs())
}

fn kkt_residual<T: Real>(
    w: &DVector<T>,
    gw: &DVector<T>,
    corr: &DVector<T>,
    lambda: T,
    skip: &[bool],
) -> T {
    let mut worst = T::zero();
    for j in 0..w.len() {
        if skip[j] {
            continue;
        }
        let grad = gw[j] - corr[j];
        let v = if w[j] > T::zero() {
            (grad + lambda).abs()
        } else if w[j] < T::zero() {
            (grad - lambda).abs()
        } else {
            (grad.abs() - lambda).max(T::zero())
        };
        worst = worst.max(v);
    }
    worst
}

/// Minimum-norm least-squares solution `D^+ t`, truncating singular values
/// below `1e-10 * sigma_max`.
pub fn pinv_solve<T: Real>(design: &DMatrix<T>, target: &DVector<T>) -> Result<DVector<T>> {
    if design.is_empty() {
        return Err(Error::InvalidArgument("pinv_solve: empty design".into()));
    }
    if design.nrows() != target.len() {
        return Err(Error::dims("pinv_solve", design.nrows(), target.len()));
    }
    let svd = SVD::try_new(design.clone(), true, true, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Err(Error::Numerical("SVD factors unavailable".into()));
    };
    let s_max = svd.singular_values.iter().fold(T::zero(), |m, &s| m.max(s));
    let cutoff = s_max * T::lit(PINV_RCOND);
    let mut coords = u.tr_mul(target);
    for (c, &s) in coords.iter_mut().zip(svd.singular_values.iter()) {
        *c = if s > cutoff { *c / s } else { T::zero() };
    }
    Ok(v_t.tr_mul(&coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn normal_equation(d: &DMatrix<f64>, t: &DVector<f64>) -> DVector<f64> {
        (d.tr_mul(d)).lu().solve(&d.tr_mul(t)).unwrap()
    }

    #[test]
    fn soft_threshold_scalar_case() {
        let prob = LassoProblem::new(DMatrix::identity(1, 1), dvector![3.0f64], 1.0);
        let sol = lasso(&prob).unwrap();
        assert!((sol.coef[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_lambda_is_ordinary_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_matrix(&mut rng, 40, 6);
        let t = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let sol = lasso(&LassoProblem::new(d.clone(), t.clone(), 0.0)).unwrap();
        assert!((sol.coef - normal_equation(&d, &t)).amax() < 1e-8);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_matrix(&mut rng, 30, 5);
        let t = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let lam = d.tr_mul(&t).amax();
        let sol = lasso(&LassoProblem::new(d, t, lam)).unwrap();
        assert!(sol.coef.iter().all(|&x| x == 0.0));
        assert!(sol.kkt_residual < 1e-12);
    }

    #[test]
    fn zero_columns_stay_zero() {
        let mut d = DMatrix::<f64>::identity(3, 3);
        d[(2, 2)] = 0.0;
        let sol = lasso(&LassoProblem::new(d, dvector![1.0, 2.0, 3.0], 0.0)).unwrap();
        assert_eq!(sol.coef, dvector![1.0, 2.0, 0.0]);
    }

    #[test]
    fn iteration_budget_exhaustion_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_matrix(&mut rng, 50, 4);
        // nearly collinear columns make coordinate descent crawl
        let mut d = DMatrix::zeros(50, 8);
        for j in 0..4 {
            d.set_column(2 * j, &base.column(j));
            d.set_column(2 * j + 1, &(base.column(j) * 1.0000001));
        }
        let t = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
        let mut prob = LassoProblem::new(d, t, 0.0);
        prob.max_iter = 2;
        prob.tol = 0.0;
        match lasso(&prob) {
            Err(Error::NonConvergence { residual, .. }) => assert!(residual > LASSO_KKT_LIMIT),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn pinv_identity_returns_target() {
        let t = dvector![1.0, -2.0, 0.5];
        let x = pinv_solve(&DMatrix::identity(3, 3), &t).unwrap();
        assert!((x - t).amax() < 1e-14);
    }

    #[test]
    fn pinv_matches_normal_equations_when_well_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_matrix(&mut rng, 20, 5);
        let t = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let x = pinv_solve(&d, &t).unwrap();
        assert!((x - normal_equation(&d, &t)).amax() < 1e-8);
    }

    #[test]
    fn pinv_rank_deficient_is_minimum_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = random_matrix(&mut rng, 20, 3);
        let mut d = DMatrix::zeros(20, 4);
        for j in 0..3 {
            d.set_column(j, &base.column(j));
        }
        d.set_column(3, &base.column(0));
        let t = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let x = pinv_solve(&d, &t).unwrap();
        // reduced problem: the duplicated pair shares the weight equally
        let reduced = normal_equation(&base, &t);
        assert!((&d * &x - &base * &reduced).amax() < 1e-10);
        assert!((x[0] - reduced[0] / 2.0).abs() < 1e-10);
        assert!((x[3] - reduced[0] / 2.0).abs() < 1e-10);
        assert!((x[1] - reduced[1]).abs() < 1e-10);
    }

    #[test]
    fn pinv_dimension_errors() {
        assert!(pinv_solve(&DMatrix::<f64>::zeros(0, 0), &DVector::zeros(0)).is_err());
        assert!(pinv_solve(&DMatrix::<f64>::identity(2, 2), &DVector::zeros(3)).is_err());
    }
}
