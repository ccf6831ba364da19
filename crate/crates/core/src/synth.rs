//! Ground-truth generation: sparse DAGs with a fixed number of pure parents,
//! decaying polynomial coefficients, non-Gaussian disturbances and forward
//! simulation of the causal graph process.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{spectral_radius, DagMatrix, PolyCoeffs};
use crate::scalar::Real;
use crate::series::TimeSeries;

/// Any sample norm above this aborts [`simulate`].
pub const EXPLOSION_THRESHOLD: f64 = 1e8;

/// Power-transform exponent bands for the disturbances; `q = 1` (Gaussian)
/// is excluded.
pub const SUB_GAUSSIAN_BAND: (f64, f64) = (0.5, 0.8);
pub const SUPER_GAUSSIAN_BAND: (f64, f64) = (1.2, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoeffScheme {
    /// `2^{i+j} c_ij ~ 0.5 [U(-1, -0.45) + U(0.45, 1)]`
    UniformGap,
    /// `2^{i+j} c_ij ~ N(1, 0.01)`
    GaussianNarrow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_nodes: usize,
    pub n_samples: usize,
    pub order: usize,
    pub seed: u64,
    pub coeff_scheme: CoeffScheme,
    pub noise_variance: f64,
    pub edge_weight_range: (f64, f64),
    pub pure_parents: usize,
    pub edge_prob: f64,
    pub burn_in: usize,
    /// Coefficient redraws allowed before giving up on a stable process.
    pub max_redraws: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_nodes: 5,
            n_samples: 900,
            order: 2,
            seed: 0,
            coeff_scheme: CoeffScheme::UniformGap,
            noise_variance: 1.0,
            edge_weight_range: (0.3, 0.9),
            pure_parents: 1,
            edge_prob: 0.4,
            burn_in: 100,
            max_redraws: 1000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.n_nodes));
        }
        if self.order == 0 {
            return bad("order must be at least 1".into());
        }
        if self.n_samples <= self.order {
            return bad(format!(
                "n_samples {} must exceed order {}",
                self.n_samples, self.order
            ));
        }
        let (lo, hi) = self.edge_weight_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "edge_weight_range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            ));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!(
                "noise_variance {} must be non-negative",
                self.noise_variance
            ));
        }
        if self.pure_parents == 0 || self.pure_parents > self.n_nodes {
            return bad(format!(
                "pure_parents {} must lie in 1..={}",
                self.pure_parents, self.n_nodes
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad(format!("edge_prob {} outside [0, 1]", self.edge_prob));
        }
        Ok(())
    }
}

/// A simulated problem with known answers.
#[derive(Debug, Clone)]
pub struct GroundTruth<T: Real> {
    pub dag: DagMatrix<T>,
    pub coeffs: PolyCoeffs<T>,
    pub series: TimeSeries<T>,
    /// Disturbances `e` aligned with `series` (burn-in removed).
    pub disturbances: DMatrix<T>,
}

/// Random causal order, Bernoulli edges from earlier to later nodes with
/// weights `+-U(lo, hi)`, and exactly `pure_parents` parentless nodes.
pub fn sample_dag<T: Real, R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> Result<DagMatrix<T>> {
    let n = cfg.n_nodes;
    if cfg.pure_parents == 0 || cfg.pure_parents > n {
        return Err(Error::InvalidArgument(format!(
            "cannot have {} pure parents among {n} nodes",
            cfg.pure_parents
        )));
    }
    let (lo, hi) = cfg.edge_weight_range;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut weights = DMatrix::<f64>::zeros(n, n);
    let draw_weight = |rng: &mut R| {
        let mag = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        };
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    };
    for pos in cfg.pure_parents..n {
        let child = order[pos];
        let mut has_parent = false;
        for &parent in &order[..pos] {
            if rng.random_bool(cfg.edge_prob) {
                weights[(child, parent)] = draw_weight(rng);
                has_parent = true;
            }
        }
        if !has_parent {
            let parent = order[rng.random_range(0..pos)];
            weights[(child, parent)] = draw_weight(rng);
        }
    }
    let mut weights = weights.map(T::lit);
    let rho = spectral_radius(&weights)?;
    if rho >= T::one() {
        weights /= rho * T::lit(1.01);
    }
    DagMatrix::new(weights)
}

pub fn sample_coeffs<T: Real, R: Rng + ?Sized>(cfg: &GenConfig, rng: &mut R) -> PolyCoeffs<T> {
    let mut coeffs = PolyCoeffs::zeros(cfg.order);
    let narrow = Normal::new(1.0, 0.1).expect("valid normal");
    for i in 1..=cfg.order {
        for (j, c) in coeffs.lag_mut(i).iter_mut().enumerate() {
            let raw = match cfg.coeff_scheme {
                CoeffScheme::UniformGap => {
                    let mag = rng.random_range(0.45..=1.0);
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                }
                CoeffScheme::GaussianNarrow => narrow.sample(rng),
            };
            *c = T::lit(raw / 2f64.powi((i + j) as i32));
        }
    }
    coeffs
}

/// Exponent `q` drawn uniformly from the union of the sub- and
/// super-Gaussian bands.
pub fn sample_exponent<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let (a0, a1) = SUB_GAUSSIAN_BAND;
    let (b0, b1) = SUPER_GAUSSIAN_BAND;
    let u = rng.random_range(0.0..(a1 - a0) + (b1 - b0));
    if u < a1 - a0 {
        a0 + u
    } else {
        b0 + (u - (a1 - a0))
    }
}

/// `N x n_cols` disturbances: per node `sign(z)|z|^q` with a node-specific
/// exponent, rescaled so each row has mean square `noise_variance`.
pub fn sample_disturbances<T: Real, R: Rng + ?Sized>(
    cfg: &GenConfig,
    n_cols: usize,
    rng: &mut R,
) -> DMatrix<T> {
    let n = cfg.n_nodes;
    let mut e = DMatrix::<f64>::zeros(n, n_cols);
    for node in 0..n {
        let q = sample_exponent(rng);
        for k in 0..n_cols {
            let z: f64 = StandardNormal.sample(rng);
            e[(node, k)] = z.signum() * z.abs().powf(q);
        }
        let ms = e.row(node).iter().map(|v| v * v).sum::<f64>() / n_cols.max(1) as f64;
        let scale = if ms > 0.0 {
            (cfg.noise_variance / ms).sqrt()
        } else {
            0.0
        };
        e.row_mut(node).scale_mut(scale);
    }
    e.map(T::lit)
}

/// Reduced-form lag filters `(I - A)^{-1} P_i(A, c)`.
pub fn reduced_filters<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
) -> Result<Vec<DMatrix<T>>> {
    let inv = dag.inverse_identity_minus();
    Ok(coeffs
        .filters(dag.weights())?
        .into_iter()
        .map(|p| &inv * p)
        .collect())
}

/// Companion matrix of the reduced-form VAR.
pub fn companion<T: Real>(filters: &[DMatrix<T>]) -> DMatrix<T> {
    let m = filters.len();
    let n = filters.first().map_or(0, |f| f.nrows());
    let mut comp = DMatrix::zeros(m * n, m * n);
    for (i, f) in filters.iter().enumerate() {
        comp.view_mut((0, i * n), (n, n)).copy_from(f);
    }
    for i in 1..m {
        comp.view_mut((i * n, (i - 1) * n), (n, n))
            .fill_with_identity();
    }
    comp
}

/// True iff the companion matrix of the reduced-form VAR has spectral radius below one.
pub fn stability_screen<T: Real>(dag: &DagMatrix<T>, coeffs: &PolyCoeffs<T>) -> bool {
    reduced_filters(dag, coeffs)
        .and_then(|f| spectral_radius(&companion(&f)))
        .map(|rho| rho < T::one())
        .unwrap_or(false)
}

/// Iterates `x(k) = sum_i Rt_i x(k-i) + (I-A)^{-1} e(k)` from zero initial
/// conditions and drops the first `burn_in` samples.
pub fn simulate<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    e: &DMatrix<T>,
    burn_in: usize,
) -> Result<TimeSeries<T>> {
    simulate_from(dag, coeffs, e, &DMatrix::zeros(dag.n(), 0), burn_in)
}

/// Like [`simulate`], but the first `initial.ncols()` samples are taken from
/// `initial` (their disturbance columns are ignored).
pub fn simulate_from<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    e: &DMatrix<T>,
    initial: &DMatrix<T>,
    burn_in: usize,
) -> Result<TimeSeries<T>> {
    let n = dag.n();
    if e.nrows() != n || initial.nrows() != n {
        return Err(Error::dims(
            "simulate",
            n,
            format!("{} / {}", e.nrows(), initial.nrows()),
        ));
    }
    let total = e.ncols();
    if total <= burn_in || initial.ncols() > total {
        return Err(Error::InvalidArgument(format!(
            "{total} disturbance columns cannot cover burn-in {burn_in} and {} initial samples",
            initial.ncols()
        )));
    }
    let inv = dag.inverse_identity_minus();
    let filters = reduced_filters(dag, coeffs)?;
    let shocks = &inv * e;
    let limit = T::lit(EXPLOSION_THRESHOLD);
    let mut x = DMatrix::<T>::zeros(n, total);
    x.columns_mut(0, initial.ncols()).copy_from(initial);
    let mut next = DVector::<T>::zeros(n);
    for k in initial.ncols()..total {
        next.copy_from(&shocks.column(k));
        for (lag, f) in filters.iter().enumerate() {
            let i = lag + 1;
            if i > k {
                break;
            }
            next.gemv(T::one(), f, &x.column(k - i), T::one());
        }
        if !(next.norm() <= limit) {
            return Err(Error::UnstableProcess { time_index: k });
        }
        x.set_column(k, &next);
    }
    TimeSeries::new(x.columns_range(burn_in..).into_owned())
}

/// Max-abs residual of `(I - A) x(k) - sum_i P_i x(k-i) - e(k)` over `k >= M`.
pub fn structural_residual<T: Real>(
    dag: &DagMatrix<T>,
    coeffs: &PolyCoeffs<T>,
    series: &TimeSeries<T>,
    e: &DMatrix<T>,
) -> Result<T> {
    let x = series.data();
    let m = coeffs.order();
    let filters = coeffs.filters(dag.weights())?;
    let lhs = dag.identity_minus();
    let mut worst = T::zero();
    for k in m..x.ncols() {
        let mut r = &lhs * x.column(k) - e.column(k);
        for (lag, p) in filters.iter().enumerate() {
            r -= p * x.column(k - lag - 1);
        }
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// Draws a full ground-truth problem from `cfg.seed`. Coefficients are
/// redrawn until the process passes [`stability_screen`].
pub fn generate<T: Real>(cfg: &GenConfig) -> Result<GroundTruth<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dag = sample_dag::<T, _>(cfg, &mut rng)?;
    let mut coeffs = None;
    for _ in 0..cfg.max_redraws.max(1) {
        let c = sample_coeffs::<T, _>(cfg, &mut rng);
        if stability_screen(&dag, &c) {
            coeffs = Some(c);
            break;
        }
    }
    let coeffs = coeffs.ok_or_else(|| {
        Error::Numerical(format!(
            "no stable coefficient draw in {} attempts",
            cfg.max_redraws
        ))
    })?;
    let e_full = sample_disturbances::<T, _>(cfg, cfg.n_samples + cfg.burn_in, &mut rng);
    let series = simulate(&dag, &coeffs, &e_full, cfg.burn_in)?;
    let disturbances = e_full.columns_range(cfg.burn_in..).into_owned();
    Ok(GroundTruth {
        dag,
        coeffs,
        series,
        disturbances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{is_dag, NILPOTENCY_TOL};

    fn cfg() -> GenConfig {
        GenConfig::default()
    }

    #[test]
    fn one_pure_parent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let dag = sample_dag::<f64, _>(&cfg(), &mut rng).unwrap();
            let roots = (0..5)
                .filter(|&i| dag.weights().row(i).iter().all(|&w| w == 0.0))
                .count();
            assert_eq!(roots, 1);
        }
    }

    #[test]
    fn two_nodes_full_density() {
        let c = GenConfig {
            n_nodes: 2,
            edge_prob: 1.0,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dag = sample_dag::<f64, _>(&c, &mut rng).unwrap();
        assert_eq!(dag.n_edges(), 1);
        let w = dag.weights().iter().find(|w| **w != 0.0).unwrap().abs();
        assert!((0.3..=0.9).contains(&w));
    }

    #[test]
    fn too_many_pure_parents() {
        let c = GenConfig {
            pure_parents: 6,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_dag::<f64, _>(&c, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sampled_dags_are_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let dag = sample_dag::<f64, _>(&cfg(), &mut rng).unwrap();
            assert!(is_dag(dag.weights(), NILPOTENCY_TOL));
        }
    }

    #[test]
    fn uniform_gap_magnitudes() {
        let c = GenConfig { order: 6, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let coeffs = sample_coeffs::<f64, _>(&c, &mut rng);
            for i in 1..=6 {
                for (j, v) in coeffs.lag(i).iter().enumerate() {
                    let scaled = v.abs() * 2f64.powi((i + j) as i32);
                    assert!((0.45..=1.0 + 1e-12).contains(&scaled), "{scaled}");
                }
            }
        }
    }

    #[test]
    fn gaussian_narrow_mean() {
        let c = GenConfig {
            coeff_scheme: CoeffScheme::GaussianNarrow,
            order: 1,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 10_000;
        let mean = (0..draws)
            .map(|_| sample_coeffs::<f64, _>(&c, &mut rng).get(1, 1) * 4.0)
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn coefficients_decay_in_expectation() {
        let c = GenConfig { order: 4, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (mut first, mut last) = (0.0, 0.0);
        for _ in 0..10_000 {
            let coeffs = sample_coeffs::<f64, _>(&c, &mut rng);
            first += coeffs.get(1, 0).abs();
            last += coeffs.get(4, 4).abs();
        }
        assert!(last <= first);
    }

    #[test]
    fn disturbance_variance_and_zero_case() {
        let c = GenConfig {
            noise_variance: 2.5,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = sample_disturbances::<f64, _>(&c, 10_000, &mut rng);
        for row in e.row_iter() {
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10_000.0;
            assert!((var / 2.5 - 1.0).abs() < 0.05, "{var}");
        }
        let silent = GenConfig {
            noise_variance: 0.0,
            ..cfg()
        };
        let z = sample_disturbances::<f64, _>(&silent, 50, &mut rng);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exponents_avoid_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let q = sample_exponent(&mut rng);
            assert!((0.5..=0.8).contains(&q) || (1.2..=2.0).contains(&q), "{q}");
        }
    }

    #[test]
    fn pure_noise_model_reproduces_disturbances() {
        let dag = DagMatrix::<f64>::empty(3);
        let coeffs = PolyCoeffs::new(1, vec![0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let e = sample_disturbances::<f64, _>(
            &GenConfig {
                n_nodes: 3,
                ..cfg()
            },
            40,
            &mut rng,
        );
        let x = simulate(&dag, &coeffs, &e, 0).unwrap();
        assert_eq!(x.data(), &e);
    }

    #[test]
    fn warm_start_geometric_decay() {
        let dag = DagMatrix::<f64>::empty(3);
        let coeffs = PolyCoeffs::new(1, vec![0.5, 0.0]).unwrap();
        let e = DMatrix::zeros(3, 10);
        let x = simulate_from(&dag, &coeffs, &e, &DMatrix::from_element(3, 1, 1.0), 0).unwrap();
        for k in 0..10 {
            for v in x.data().column(k).iter() {
                assert_eq!(*v, 0.5f64.powi(k as i32));
            }
        }
    }

    #[test]
    fn explosion_is_reported() {
        let dag = DagMatrix::<f64>::empty(2);
        let coeffs = PolyCoeffs::new(1, vec![3.0, 0.0]).unwrap();
        let e = DMatrix::from_element(2, 100, 1.0);
        match simulate(&dag, &coeffs, &e, 0) {
            Err(Error::UnstableProcess { time_index }) => {
                assert!(time_index > 10 && time_index < 100)
            }
            other => panic!("expected explosion, got {other:?}"),
        }
    }

    #[test]
    fn stability_screen_examples() {
        let dag = DagMatrix::<f64>::empty(3);
        assert!(stability_screen(&dag, &PolyCoeffs::zeros(3)));
        let unstable = PolyCoeffs::new(1, vec![1.1, 0.0]).unwrap();
        assert!(!stability_screen(&dag, &unstable));
    }

    #[test]
    fn accepted_draws_never_explode() {
        for seed in 0..100 {
            let c = GenConfig {
                seed,
                order: 5,
                n_samples: 300,
                ..cfg()
            };
            generate::<f64>(&c).unwrap();
        }
    }

    #[test]
    fn ground_truth_satisfies_structural_equation() {
        for seed in 0..10 {
            let c = GenConfig {
                seed,
                order: 3,
                n_samples: 400,
                ..cfg()
            };
            let gt = generate::<f64>(&c).unwrap();
            let r = structural_residual(&gt.dag, &gt.coeffs, &gt.series, &gt.disturbances).unwrap();
            assert!(r < 1e-10, "residual {r}");
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate::<f64>(&cfg()).unwrap();
        let b = generate::<f64>(&cfg()).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.dag, b.dag);
    }
}
