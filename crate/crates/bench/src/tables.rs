//! Flat output records, written as CSV or JSON.

use std::path::Path;

use serde::{Serialize, Serializer};

use crate::error::{BenchError, Result};
use crate::harness::{
    AggregateRow, BaselineRow, ExperimentResult, HistogramRow, OrderRow, Summary, METRIC_NAMES,
};
use crate::io::{to_json_bytes, write_bytes};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Deserialize, Serialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A float that serializes infinities as the strings `inf` / `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }
}

fn num(v: Option<f64>) -> Option<Num> {
    v.map(Num)
}

/// Writes `records` to `path` in the given format.
pub fn write_records<R: Serialize>(path: &Path, format: Format, records: &[R]) -> Result<()> {
    let bytes = match format {
        Format::Json => to_json_bytes(&records),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(r)
                    .map_err(|e| BenchError::parse(path, e.to_string()))?;
            }
            w.into_inner()
                .map_err(|e| BenchError::parse(path, e.to_string()))?
        }
    };
    write_bytes(path, &bytes)
}

/// One row of the long-format results table.
#[derive(Debug, Clone, Serialize)]
pub struct LongRecord {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub snr_a_db: Option<Num>,
    pub err_c: Option<f64>,
    pub err_eps: Option<f64>,
    pub err_eps_causal: Option<f64>,
    pub shd: Option<usize>,
    pub rmse_a: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub status: String,
}

pub fn long_records(result: &ExperimentResult) -> Vec<LongRecord> {
    result
        .rows
        .iter()
        .map(|r| {
            let m = r.metrics.as_ref();
            LongRecord {
                k: r.k,
                m: r.m,
                seed: r.seed,
                lambda1: r.lambdas.map(|l| l.0),
                lambda2: r.lambdas.map(|l| l.1),
                lambda3: r.lambdas.map(|l| l.2),
                snr_a_db: num(m.map(|m| m.snr_a)),
                err_c: m.map(|m| m.err_c),
                err_eps: m.map(|m| m.err_eps),
                err_eps_causal: m.map(|m| m.err_eps_causal),
                shd: m.map(|m| m.shd),
                rmse_a: m.map(|m| m.rmse_a),
                fit_seconds: r.fit_seconds,
                status: r.status.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRecord {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub snr_a_db: Option<Num>,
    pub rmse_a: Option<f64>,
    pub shd: Option<usize>,
    pub n_params: Option<usize>,
    pub status: String,
}

pub fn baseline_records(rows: &[BaselineRow]) -> Vec<BaselineRecord> {
    rows.iter()
        .map(|b| BaselineRecord {
            k: b.k,
            m: b.m,
            seed: b.seed,
            snr_a_db: num(b.snr_a),
            rmse_a: b.rmse_a,
            shd: b.shd,
            n_params: b.n_params,
            status: b.status.clone(),
        })
        .collect()
}

/// Aggregate rows flattened to `K, M, n_ok, n_failed, <metric>_median,
/// <metric>_mean, ...`. Built by hand because the column set is dynamic.
pub fn write_aggregate(
    path: &Path,
    format: Format,
    rows: &[AggregateRow],
    with_baseline: bool,
) -> Result<()> {
    let mut names: Vec<String> = ["K", "M", "n_ok", "n_failed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut metric_names: Vec<&str> = METRIC_NAMES.to_vec();
    if with_baseline {
        metric_names.push("baseline_snr_a_db");
    }
    for m in &metric_names {
        names.push(format!("{m}_median"));
        names.push(format!("{m}_mean"));
    }
    let records: Vec<Vec<serde_json::Value>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.k.into(), r.m.into(), r.n_ok.into(), r.n_failed.into()];
            let mut sums: Vec<Option<Summary>> = vec![
                r.snr_a_db,
                r.err_c,
                r.err_eps,
                r.err_eps_causal,
                r.shd,
                r.rmse_a,
            ];
            if with_baseline {
                sums.push(r.baseline_snr_a_db);
            }
            for s in sums {
                v.push(json_num(s.map(|s| s.median)));
                v.push(json_num(s.map(|s| s.mean)));
            }
            v
        })
        .collect();
    write_dynamic(path, format, &names, &records)
}

fn json_num(v: Option<f64>) -> serde_json::Value {
    match v {
        None => serde_json::Value::Null,
        Some(x) if x.is_finite() => x.into(),
        Some(x) if x > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
    }
}

fn write_dynamic(
    path: &Path,
    format: Format,
    names: &[String],
    records: &[Vec<serde_json::Value>],
) -> Result<()> {
    let bytes = match format {
        Format::Json => {
            let objs: Vec<serde_json::Map<String, serde_json::Value>> = records
                .iter()
                .map(|r| names.iter().cloned().zip(r.iter().cloned()).collect())
                .collect();
            to_json_bytes(&objs)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let map = |e: csv::Error| BenchError::parse(path, e.to_string());
            w.write_record(names).map_err(map)?;
            for r in records {
                let fields: Vec<String> = r
                    .iter()
                    .map(|v| match v {
                        serde_json::Value::Null => String::new(),
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                w.write_record(&fields).map_err(map)?;
            }
            w.into_inner()
                .map_err(|e| BenchError::parse(path, e.to_string()))?
        }
    };
    write_bytes(path, &bytes)
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderRecord {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub selected_m: Option<usize>,
    pub rmse_a: Option<f64>,
    pub snr_a_db: Option<Num>,
    pub status: String,
}

pub fn order_records(rows: &[OrderRow]) -> Vec<OrderRecord> {
    rows.iter()
        .map(|r| OrderRecord {
            k: r.k,
            seed: r.seed,
            selected_m: r.selected,
            rmse_a: r.rmse_a,
            snr_a_db: num(r.snr_a),
            status: r.status.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRecord {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub count: usize,
    pub mean_rmse_a: Option<f64>,
}

pub fn histogram_records(rows: &[HistogramRow]) -> Vec<HistogramRecord> {
    rows.iter()
        .map(|h| HistogramRecord {
            k: h.k,
            m: h.m,
            count: h.count,
            mean_rmse_a: h.mean_rmse_a,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NaicRecord {
    #[serde(rename = "M")]
    pub m: usize,
    pub naic: f64,
    pub n_params: usize,
    pub jittered: bool,
    pub selected: bool,
}
