//! Files on disk: series and matrix CSVs, JSON documents, dataset bundles
//! and their sha256 manifests.

use std::fs;
use std::path::{Path, PathBuf};

use cgp_lingam::pipeline::StageTimings;
use cgp_lingam::{
    DagMatrix, FitConfig, FitReportF64, GenConfig, GroundTruthF64, PolyCoeffs, TimeSeriesF64,
};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const SERIES_FILE: &str = "series.csv";
pub const DAG_FILE: &str = "dag.csv";
pub const COEFFS_FILE: &str = "coeffs.json";
pub const DISTURBANCES_FILE: &str = "disturbances.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| BenchError::io(path, e))
}

pub fn to_json_bytes<S: Serialize>(value: &S) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        BenchError::parse(
            path,
            format!("line {} column {}: {e}", e.line(), e.column()),
        )
    })
}

/// Rows are named columns of a table: a header line, then one record per row.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let map = |e: csv::Error| BenchError::parse(path, e.to_string());
    w.write_record(header).map_err(map)?;
    for row in rows {
        w.write_record(row).map_err(map)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| BenchError::parse(path, e.to_string()))?;
    write_bytes(path, &bytes)
}

/// Reads a numeric table; returns the header and an `rows x cols` matrix.
pub fn read_numeric_table(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| BenchError::parse(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(BenchError::parse(path, "missing header row"));
    }
    let mut values = Vec::new();
    let mut n_rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| BenchError::parse(path, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(BenchError::parse(
                path,
                format!(
                    "line {line}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                ),
            ));
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                BenchError::parse(
                    path,
                    format!(
                        "line {line}, field {} ({}): not a number: {field:?}",
                        col + 1,
                        header[col]
                    ),
                )
            })?;
            if !v.is_finite() {
                return Err(BenchError::parse(
                    path,
                    format!(
                        "line {line}, field {} ({}): non-finite value",
                        col + 1,
                        header[col]
                    ),
                ));
            }
            values.push(v);
        }
        n_rows += 1;
    }
    Ok((
        header.clone(),
        DMatrix::from_row_slice(n_rows, header.len(), &values),
    ))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect()
}

/// One row per time sample, one column per node.
pub fn write_series_csv(path: &Path, series: &TimeSeriesF64) -> Result<()> {
    write_table(
        path,
        series.names(),
        &matrix_rows(&series.data().transpose()),
    )
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeriesF64> {
    let (names, rows) = read_numeric_table(path)?;
    if rows.nrows() == 0 {
        return Err(BenchError::parse(path, "no samples"));
    }
    Ok(TimeSeriesF64::with_names(names, rows.transpose())?)
}

/// Row `i` holds the weights of the edges into node `i`.
pub fn write_dag_csv(path: &Path, names: &[String], dag: &DagMatrix<f64>) -> Result<()> {
    write_table(path, names, &matrix_rows(dag.weights()))
}

pub fn read_dag_csv(path: &Path) -> Result<DagMatrix<f64>> {
    let (_, m) = read_numeric_table(path)?;
    DagMatrix::new(m).map_err(|e| BenchError::parse(path, e.to_string()))
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_nested(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(BenchError::Input(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(n, cols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffsDoc {
    pub schema: u32,
    pub order: usize,
    /// `lags[i-1][j]` multiplies `A^j` in lag `i`.
    pub lags: Vec<Vec<f64>>,
}

impl CoeffsDoc {
    pub fn new(c: &PolyCoeffs<f64>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            order: c.order(),
            lags: (1..=c.order()).map(|i| c.lag(i).to_vec()).collect(),
        }
    }

    pub fn to_coeffs(&self) -> Result<PolyCoeffs<f64>> {
        if self.lags.len() != self.order {
            return Err(BenchError::Input(format!(
                "coefficients: order {} but {} lags",
                self.order,
                self.lags.len()
            )));
        }
        Ok(PolyCoeffs::from_lags(&self.lags)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).expect("serializable config"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub files: Vec<ManifestEntry>,
}

/// Hashes the named files in `dir` and writes `manifest.json`.
pub fn write_manifest(dir: &Path, files: &[&str]) -> Result<Manifest> {
    let mut names: Vec<&str> = files.to_vec();
    names.sort_unstable();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| BenchError::io(&path, e))?;
        entries.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        files: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Writes a generated problem as a directory bundle.
pub fn write_bundle(dir: &Path, cfg: &GenConfig, truth: &GroundTruthF64) -> Result<Manifest> {
    ensure_dir(dir)?;
    let names = truth.series.names().to_vec();
    write_series_csv(&dir.join(SERIES_FILE), &truth.series)?;
    write_dag_csv(&dir.join(DAG_FILE), &names, &truth.dag)?;
    write_json(&dir.join(COEFFS_FILE), &CoeffsDoc::new(&truth.coeffs))?;
    let dist = TimeSeriesF64::with_names(names, truth.disturbances.clone())?;
    write_series_csv(&dir.join(DISTURBANCES_FILE), &dist)?;
    write_json(
        &dir.join(PROVENANCE_FILE),
        &Provenance::new("generate", cfg),
    )?;
    write_manifest(
        dir,
        &[
            SERIES_FILE,
            DAG_FILE,
            COEFFS_FILE,
            DISTURBANCES_FILE,
            PROVENANCE_FILE,
        ],
    )
}

pub fn read_bundle(dir: &Path) -> Result<GroundTruthF64> {
    let series = read_series_csv(&dir.join(SERIES_FILE))?;
    let dag = read_dag_csv(&dir.join(DAG_FILE))?;
    let coeffs = read_json::<CoeffsDoc>(&dir.join(COEFFS_FILE))?.to_coeffs()?;
    let disturbances = read_series_csv(&dir.join(DISTURBANCES_FILE))?.into_data();
    if dag.n() != series.n_nodes() {
        return Err(BenchError::Input(format!(
            "bundle {}: DAG has {} nodes, series has {}",
            dir.display(),
            dag.n(),
            series.n_nodes()
        )));
    }
    Ok(GroundTruthF64 {
        dag,
        coeffs,
        series,
        disturbances,
    })
}

/// Serialized form of a fit; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema: u32,
    pub config: FitConfig,
    pub names: Vec<String>,
    pub n_samples: usize,
    pub dag: Vec<Vec<f64>>,
    pub causal_order: Vec<usize>,
    pub coeffs: CoeffsDoc,
    pub rtilde: Vec<Vec<Vec<f64>>>,
    pub n_params: usize,
    pub naic: f64,
    pub naic_jittered: bool,
    pub stage1_converged: bool,
    pub stage1_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl ReportDoc {
    pub fn new(report: &FitReportF64, names: &[String], timings: Option<StageTimings>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            config: report.config.clone(),
            names: names.to_vec(),
            n_samples: report.n_samples,
            dag: nested(report.dag.weights()),
            causal_order: report.causal_order.clone(),
            coeffs: CoeffsDoc::new(&report.coeffs),
            rtilde: report.filters.rtilde().iter().map(nested).collect(),
            n_params: report.n_params,
            naic: report.naic,
            naic_jittered: report.naic_jittered,
            stage1_converged: report.stage1_converged,
            stage1_trace: report.trace.clone(),
            timings,
        }
    }

    pub fn dag(&self) -> Result<DagMatrix<f64>> {
        Ok(DagMatrix::new(from_nested(&self.dag, "dag")?)?)
    }
}

/// Output paths are resolved relative to `--out` (default: current dir).
pub fn out_path(out: &Option<PathBuf>, name: &str) -> PathBuf {
    out.as_deref().unwrap_or(Path::new(".")).join(name)
}
