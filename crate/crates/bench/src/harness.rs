//! Monte-Carlo sweeps over sample size and order.

use std::time::Instant;

use cgp_lingam::pipeline::{fit_path, select_order, var_lingam_baseline, BASELINE_RIDGE};
use cgp_lingam::synth::generate;
use cgp_lingam::{FitConfig, FitReportF64, GenConfig, GroundTruthF64, TimeSeriesF64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{error_tag, BenchError, Result};
use crate::metrics::{compute_metrics, rmse_a, shd, snr_a, Metrics};

pub const TRAIN_FRACTION: f64 = 0.6;
pub const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub lambda3: Vec<f64>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            lambda1: vec![0.01, 0.1, 1.0],
            lambda2: vec![0.01, 0.1, 1.0],
            lambda3: vec![1.0, 10.0, 100.0],
        }
    }
}

impl LambdaGrid {
    /// The single point of `cfg`.
    pub fn fixed(cfg: &FitConfig) -> Self {
        Self {
            lambda1: vec![cfg.lambda1],
            lambda2: vec![cfg.lambda2],
            lambda3: vec![cfg.lambda3],
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("lambda3", &self.lambda3),
        ] {
            if axis.is_empty() {
                return Err(BenchError::Input(format!("grid axis {name} is empty")));
            }
            if let Some(v) = axis.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(BenchError::Input(format!(
                    "grid axis {name} has invalid value {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub k_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub seeds: usize,
    /// Root seed; every cell derives its own from it.
    pub seed: u64,
    pub generator: GenConfig,
    /// Template for the fit; its lambdas are used when `grid` is absent.
    pub fit: FitConfig,
    pub grid: Option<LambdaGrid>,
    /// Also fit the VAR-LiNGAM baseline on each training block.
    pub baseline: bool,
    /// Fill the `fit_seconds` column. Off by default so outputs are
    /// byte-reproducible.
    pub record_timings: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            k_values: vec![300, 500, 700, 900],
            m_values: vec![2, 5, 7, 10],
            seeds: 30,
            seed: 0,
            generator: GenConfig::default(),
            fit: FitConfig::default(),
            grid: Some(LambdaGrid::default()),
            baseline: false,
            record_timings: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.m_values.is_empty() {
            return Err(BenchError::Input(
                "k_values and m_values must be non-empty".into(),
            ));
        }
        if self.seeds == 0 {
            return Err(BenchError::Input("seeds must be at least 1".into()));
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0) {
            return Err(BenchError::Input(format!("order {m} must be at least 1")));
        }
        for &k in &self.k_values {
            let (train, val, _) = split_sizes(k);
            let m_max = *self.m_values.iter().max().expect("non-empty");
            if train <= m_max + 1 || val == 0 || train + val >= k {
                return Err(BenchError::Input(format!(
                    "K = {k} is too short for order {m_max}"
                )));
            }
        }
        self.generator.validate()?;
        self.fit.validate()?;
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        Ok(())
    }

    fn grid(&self) -> LambdaGrid {
        self.grid
            .clone()
            .unwrap_or_else(|| LambdaGrid::fixed(&self.fit))
    }
}

/// Train, validation and test sizes of the contiguous 60/20/20 split.
pub fn split_sizes(k: usize) -> (usize, usize, usize) {
    let train = (TRAIN_FRACTION * k as f64).round() as usize;
    let val = (VALIDATION_FRACTION * k as f64).round() as usize;
    (train, val, k.saturating_sub(train + val))
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in cell `(k, m)`.
pub fn cell_seed(root: u64, k: usize, m: usize, rep: usize) -> u64 {
    [k as u64, m as u64, rep as u64]
        .iter()
        .fold(mix(root), |h, &v| mix(h ^ v))
}

/// Samples `start..end`, prefixed by `history` earlier samples that serve
/// only as lags.
fn window(
    series: &TimeSeriesF64,
    start: usize,
    end: usize,
    history: usize,
) -> Result<TimeSeriesF64> {
    Ok(series.slice(start - history..end)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub lambdas: Option<(f64, f64, f64)>,
    pub metrics: Option<Metrics>,
    pub fit_seconds: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub snr_a: Option<f64>,
    pub rmse_a: Option<f64>,
    pub shd: Option<usize>,
    pub n_params: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub baseline: Vec<BaselineRow>,
}

/// Result of the validation grid search on one training block.
pub struct GridChoice {
    pub report: FitReportF64,
    pub validation_error: f64,
}

/// Per-sample causal one-step errors `1/N ||x(k) - x_hat(k)||^2` for
/// `k >= report order` in `window`.
pub fn causal_errors(report: &FitReportF64, window: &TimeSeriesF64) -> Vec<f64> {
    let m = report.coeffs.order();
    let data = window.data();
    let n = window.n_nodes() as f64;
    (m..window.n_samples())
        .map(|k| {
            let history: Vec<_> = (1..=m).map(|i| data.column(k - i).into_owned()).collect();
            (data.column(k) - report.forecast(&history)).norm_squared() / n
        })
        .collect()
}

/// Fits every grid point on `train` and scores it by the causal one-step
/// error on `validation` (whose first `cfg.order` columns are history).
/// Among the points within one standard error of the best score, the one
/// with the largest `lambda2` wins, then the lower score, then grid order.
pub fn grid_search(
    train: &TimeSeriesF64,
    validation: &TimeSeriesF64,
    cfg: &FitConfig,
    grid: &LambdaGrid,
) -> Result<GridChoice> {
    let mut scored: Vec<(FitReportF64, f64, f64)> = Vec::new();
    let mut first_err = None;
    for &l1 in &grid.lambda1 {
        for &l3 in &grid.lambda3 {
            let point = FitConfig {
                lambda1: l1,
                lambda3: l3,
                ..cfg.clone()
            };
            let reports = match fit_path(train, &point, &grid.lambda2) {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("grid point lambda1={l1} lambda3={l3} failed: {e}");
                    first_err.get_or_insert(e);
                    continue;
                }
            };
            for report in reports {
                let errs = causal_errors(&report, validation);
                let n = errs.len() as f64;
                let mean = errs.iter().sum::<f64>() / n;
                let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                scored.push((report, mean, (var / n).sqrt()));
            }
        }
    }
    let Some(best) = scored.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else {
        return Err(match first_err {
            Some(e) => e.into(),
            None => BenchError::Input("empty lambda grid".into()),
        });
    };
    let limit = best.1 + best.2;
    let mut pick: Option<(FitReportF64, f64)> = None;
    for (report, err, _) in scored {
        if err > limit {
            continue;
        }
        let better = pick.as_ref().is_none_or(|(p, p_err)| {
            report.config.lambda2 > p.config.lambda2
                || (report.config.lambda2 == p.config.lambda2 && err < *p_err)
        });
        if better {
            pick = Some((report, err));
        }
    }
    let (report, validation_error) = pick.expect("the best point is within its own band");
    Ok(GridChoice {
        report,
        validation_error,
    })
}

struct CellOutcome {
    row: ResultRow,
    baseline: Option<BaselineRow>,
}

fn error_row(k: usize, m: usize, seed: u64, err: &BenchError) -> ResultRow {
    ResultRow {
        k,
        m,
        seed,
        lambdas: None,
        metrics: None,
        fit_seconds: None,
        status: status_of(err),
    }
}

fn status_of(err: &BenchError) -> String {
    match err {
        BenchError::Core(e) => format!("error:{}", error_tag(e)),
        _ => "error:input".to_string(),
    }
}

/// Simulated problem of one replicate.
pub fn cell_truth(spec: &ExperimentSpec, k: usize, m: usize, seed: u64) -> Result<GroundTruthF64> {
    let gen = GenConfig {
        n_samples: k,
        order: m,
        seed,
        ..spec.generator.clone()
    };
    Ok(generate::<f64>(&gen)?)
}

fn run_cell(
    spec: &ExperimentSpec,
    grid: &LambdaGrid,
    k: usize,
    m: usize,
    rep: usize,
) -> CellOutcome {
    let seed = cell_seed(spec.seed, k, m, rep);
    let truth = match cell_truth(spec, k, m, seed) {
        Ok(t) => t,
        Err(e) => {
            return CellOutcome {
                row: error_row(k, m, seed, &e),
                baseline: spec.baseline.then(|| baseline_error_row(k, m, seed, &e)),
            }
        }
    };
    let (n_train, n_val, _) = split_sizes(k);
    let cfg = FitConfig {
        order: m,
        seed,
        ..spec.fit.clone()
    };
    let fitted = (|| -> Result<(FitReportF64, Metrics, f64)> {
        let train = truth.series.slice(0..n_train)?;
        let validation = window(&truth.series, n_train, n_train + n_val, m)?;
        let test = window(&truth.series, n_train + n_val, k, m)?;
        let t0 = Instant::now();
        let choice = grid_search(&train, &validation, &cfg, grid)?;
        let secs = t0.elapsed().as_secs_f64();
        let metrics = compute_metrics(&truth, &choice.report, &test, m)?;
        Ok((choice.report, metrics, secs))
    })();
    let row = match fitted {
        Ok((report, metrics, secs)) => ResultRow {
            k,
            m,
            seed,
            lambdas: Some((
                report.config.lambda1,
                report.config.lambda2,
                report.config.lambda3,
            )),
            metrics: Some(metrics),
            fit_seconds: spec.record_timings.then_some(secs),
            status: "ok".into(),
        },
        Err(e) => error_row(k, m, seed, &e),
    };
    let baseline = spec
        .baseline
        .then(|| run_baseline(&truth, &cfg, n_train, k, m, seed));
    CellOutcome { row, baseline }
}

fn baseline_error_row(k: usize, m: usize, seed: u64, err: &BenchError) -> BaselineRow {
    BaselineRow {
        k,
        m,
        seed,
        snr_a: None,
        rmse_a: None,
        shd: None,
        n_params: None,
        status: status_of(err),
    }
}

fn run_baseline(
    truth: &GroundTruthF64,
    cfg: &FitConfig,
    n_train: usize,
    k: usize,
    m: usize,
    seed: u64,
) -> BaselineRow {
    let res = (|| -> Result<_> {
        let train = truth.series.slice(0..n_train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(var_lingam_baseline(
            &train,
            m,
            BASELINE_RIDGE,
            cfg.prune_thresh,
            &mut rng,
        )?)
    })();
    match res {
        Ok(b) => {
            let (a, a_hat) = (truth.dag.weights(), b.a0.weights());
            BaselineRow {
                k,
                m,
                seed,
                snr_a: Some(snr_a(a, a_hat)),
                rmse_a: Some(rmse_a(a, a_hat)),
                shd: Some(shd(a, a_hat, cfg.prune_thresh)),
                n_params: Some(b.n_params),
                status: "ok".into(),
            }
        }
        Err(e) => baseline_error_row(k, m, seed, &e),
    }
}

/// Runs every `(K, M, replicate)` cell. Row order is `K`, then `M`, then
/// replicate, whatever the number of worker threads.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let grid = spec.grid();
    let cells: Vec<(usize, usize, usize)> = spec
        .k_values
        .iter()
        .flat_map(|&k| {
            spec.m_values
                .iter()
                .flat_map(move |&m| (0..spec.seeds).map(move |r| (k, m, r)))
        })
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(k, m, r)| run_cell(spec, &grid, k, m, r))
        .collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut baseline = Vec::new();
    for o in outcomes {
        rows.push(o.row);
        baseline.extend(o.baseline);
    }
    Ok(ExperimentResult { rows, baseline })
}

/// Median and mean of one metric in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            median,
            mean: v.iter().sum::<f64>() / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    pub m: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub snr_a_db: Option<Summary>,
    pub err_c: Option<Summary>,
    pub err_eps: Option<Summary>,
    pub err_eps_causal: Option<Summary>,
    pub shd: Option<Summary>,
    pub rmse_a: Option<Summary>,
    /// Only filled when the baseline was run.
    pub baseline_snr_a_db: Option<Summary>,
}

pub const METRIC_NAMES: [&str; 6] = [
    "snr_a_db",
    "err_c",
    "err_eps",
    "err_eps_causal",
    "shd",
    "rmse_a",
];

/// Per-cell summaries over the successful replicates, in first-seen order.
pub fn aggregate(result: &ExperimentResult) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in &result.rows {
        if !keys.contains(&(r.k, r.m)) {
            keys.push((r.k, r.m));
        }
    }
    keys.into_iter()
        .map(|(k, m)| {
            let cell: Vec<&ResultRow> = result
                .rows
                .iter()
                .filter(|r| r.k == k && r.m == m)
                .collect();
            let ok: Vec<&Metrics> = cell.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let col =
                |f: fn(&Metrics) -> f64| Summary::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            let base: Vec<f64> = result
                .baseline
                .iter()
                .filter(|b| b.k == k && b.m == m)
                .filter_map(|b| b.snr_a)
                .collect();
            AggregateRow {
                k,
                m,
                n_ok: ok.len(),
                n_failed: cell.len() - ok.len(),
                snr_a_db: col(|m| m.snr_a),
                err_c: col(|m| m.err_c),
                err_eps: col(|m| m.err_eps),
                err_eps_causal: col(|m| m.err_eps_causal),
                shd: col(|m| m.shd as f64),
                rmse_a: col(|m| m.rmse_a),
                baseline_snr_a_db: Summary::of(&base),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderSpec {
    pub k_values: Vec<usize>,
    pub m_true: usize,
    pub min_order: usize,
    pub max_order: usize,
    pub seeds: usize,
    pub seed: u64,
    pub generator: GenConfig,
    pub fit: FitConfig,
}

impl Default for OrderSpec {
    fn default() -> Self {
        Self {
            k_values: vec![500, 750, 1000],
            m_true: 3,
            min_order: 2,
            max_order: 6,
            seeds: 50,
            seed: 0,
            generator: GenConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

impl OrderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.seeds == 0 {
            return Err(BenchError::Input(
                "k_values and seeds must be non-empty".into(),
            ));
        }
        if self.min_order == 0 || self.min_order > self.max_order || self.m_true == 0 {
            return Err(BenchError::Input(format!(
                "order range {}..={} (true order {}) is invalid",
                self.min_order, self.max_order, self.m_true
            )));
        }
        self.generator.validate()?;
        self.fit.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderRow {
    pub k: usize,
    pub seed: u64,
    pub selected: Option<usize>,
    pub rmse_a: Option<f64>,
    pub snr_a: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub k: usize,
    pub m: usize,
    pub count: usize,
    /// Mean RMSE_A over the replicates that selected `m`.
    pub mean_rmse_a: Option<f64>,
}

/// Order selection by nAIC on each full simulated series.
pub fn run_order_selection(spec: &OrderSpec) -> Result<Vec<OrderRow>> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = spec
        .k_values
        .iter()
        .flat_map(|&k| (0..spec.seeds).map(move |r| (k, r)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(k, rep)| {
            let seed = cell_seed(spec.seed, k, spec.m_true, rep);
            let res = (|| -> Result<_> {
                let gen = GenConfig {
                    n_samples: k,
                    order: spec.m_true,
                    seed,
                    ..spec.generator.clone()
                };
                let truth = generate::<f64>(&gen)?;
                let cfg = FitConfig {
                    seed,
                    ..spec.fit.clone()
                };
                let sel = select_order(&truth.series, &cfg, spec.min_order..=spec.max_order)?;
                Ok((truth, sel))
            })();
            match res {
                Ok((truth, sel)) => {
                    let (a, a_hat) = (truth.dag.weights(), sel.best_fit.dag.weights());
                    OrderRow {
                        k,
                        seed,
                        selected: Some(sel.best_order),
                        rmse_a: Some(rmse_a(a, a_hat)),
                        snr_a: Some(snr_a(a, a_hat)),
                        status: "ok".into(),
                    }
                }
                Err(e) => OrderRow {
                    k,
                    seed,
                    selected: None,
                    rmse_a: None,
                    snr_a: None,
                    status: status_of(&e),
                },
            }
        })
        .collect())
}

/// Counts of the selected order per `K`, over the whole candidate range.
pub fn order_histogram(spec: &OrderSpec, rows: &[OrderRow]) -> Vec<HistogramRow> {
    let mut out = Vec::new();
    for &k in &spec.k_values {
        for m in spec.min_order..=spec.max_order {
            let hits: Vec<f64> = rows
                .iter()
                .filter(|r| r.k == k && r.selected == Some(m))
                .filter_map(|r| r.rmse_a)
                .collect();
            out.push(HistogramRow {
                k,
                m,
                count: hits.len(),
                mean_rmse_a: Summary::of(&hits).map(|s| s.mean),
            });
        }
    }
    out
}

/// Most frequent order for `k`; ties go to the smaller order.
pub fn modal_order(hist: &[HistogramRow], k: usize) -> Option<usize> {
    hist.iter()
        .filter(|h| h.k == k && h.count > 0)
        .fold(None::<&HistogramRow>, |best, h| match best {
            Some(b) if b.count >= h.count => Some(b),
            _ => Some(h),
        })
        .map(|h| h.m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_cover_series() {
        assert_eq!(split_sizes(300), (180, 60, 60));
        assert_eq!(split_sizes(750), (450, 150, 150));
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(0, 300, 2, 0);
        assert_ne!(a, cell_seed(0, 300, 2, 1));
        assert_ne!(a, cell_seed(0, 300, 5, 0));
        assert_ne!(a, cell_seed(1, 300, 2, 0));
        assert_eq!(a, cell_seed(0, 300, 2, 0));
    }

    #[test]
    fn summary_median_and_mean() {
        let s = Summary::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 4.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn modal_order_prefers_smaller_on_ties() {
        let h = |m, count| HistogramRow {
            k: 500,
            m,
            count,
            mean_rmse_a: None,
        };
        assert_eq!(modal_order(&[h(2, 3), h(3, 5), h(4, 5)], 500), Some(3));
        assert_eq!(modal_order(&[h(2, 0)], 500), None);
    }
}
