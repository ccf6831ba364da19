//! Recovery and prediction metrics against a known ground truth.

use cgp_lingam::pipeline::{causal_prediction_mse, structural_prediction_mse};
use cgp_lingam::{DagMatrix, FitReportF64, GroundTruthF64, PolyCoeffs, Result, TimeSeriesF64};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `+inf` when the estimate is exact.
    #[serde(with = "inf_as_string")]
    pub snr_a: f64,
    pub err_c: f64,
    /// Set when the estimated and true orders differ and `err_c` was
    /// computed on zero-padded coefficient vectors.
    pub err_c_padded: bool,
    pub err_eps: f64,
    pub err_eps_causal: f64,
    pub shd: usize,
    pub rmse_a: f64,
}

/// `20 log10(||A|| / ||A_hat - A||)` in dB.
pub fn snr_a(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> f64 {
    let err = (est - truth).norm();
    if err == 0.0 {
        return f64::INFINITY;
    }
    20.0 * (truth.norm() / err).log10()
}

/// `||A_hat - A|| / ||A||`.
pub fn rmse_a(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> f64 {
    (est - truth).norm() / truth.norm()
}

/// Relative L2 coefficient error on zero-padded vectors; the flag reports
/// whether padding was needed.
pub fn err_c(truth: &PolyCoeffs<f64>, est: &PolyCoeffs<f64>) -> (f64, bool) {
    let (t, e) = (truth.as_slice(), est.as_slice());
    let len = t.len().max(e.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let num: f64 = (0..len).map(|i| (at(e, i) - at(t, i)).powi(2)).sum();
    let den: f64 = t.iter().map(|v| v * v).sum();
    ((num / den).sqrt(), t.len() != e.len())
}

/// Entries whose thresholded support differs.
pub fn shd(truth: &DMatrix<f64>, est: &DMatrix<f64>, thresh: f64) -> usize {
    truth
        .iter()
        .zip(est.iter())
        .filter(|(a, b)| (a.abs() > thresh) != (b.abs() > thresh))
        .count()
}

/// Metrics of `report` on `window`, scoring samples `start..` and using the
/// columns before `start` as lag history only. `start` must cover both the
/// true and the estimated order.
pub fn compute_metrics(
    truth: &GroundTruthF64,
    report: &FitReportF64,
    window: &TimeSeriesF64,
    start: usize,
) -> Result<Metrics> {
    compute_metrics_parts(
        truth,
        &report.dag,
        &report.coeffs,
        report.config.prune_thresh,
        window,
        start,
    )
}

pub fn compute_metrics_parts(
    truth: &GroundTruthF64,
    dag: &DagMatrix<f64>,
    coeffs: &PolyCoeffs<f64>,
    prune_thresh: f64,
    window: &TimeSeriesF64,
    start: usize,
) -> Result<Metrics> {
    let (a, a_hat) = (truth.dag.weights(), dag.weights());
    if a.shape() != a_hat.shape() {
        return Err(cgp_lingam::Error::dims(
            "compute_metrics",
            format!("{:?}", a.shape()),
            format!("{:?}", a_hat.shape()),
        ));
    }
    let (err_c, err_c_padded) = err_c(&truth.coeffs, coeffs);
    let err_eps = structural_prediction_mse(dag, coeffs, window, start)?
        - structural_prediction_mse(&truth.dag, &truth.coeffs, window, start)?;
    let err_eps_causal = causal_prediction_mse(dag, coeffs, window, start)?
        - causal_prediction_mse(&truth.dag, &truth.coeffs, window, start)?;
    Ok(Metrics {
        snr_a: snr_a(a, a_hat),
        err_c,
        err_c_padded,
        err_eps,
        err_eps_causal,
        shd: shd(a, a_hat, prune_thresh),
        rmse_a: rmse_a(a, a_hat),
    })
}

mod inf_as_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}
