//! Command-line front end.

use std::path::{Path, PathBuf};

use cgp_lingam::pipeline::{fit_timed, select_order};
use cgp_lingam::synth::generate;
use cgp_lingam::{FitConfig, GenConfig};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::error::{BenchError, Result};
use crate::harness::{
    aggregate, order_histogram, run_experiment, run_order_selection, split_sizes, ExperimentSpec,
    OrderSpec,
};
use crate::io::{
    ensure_dir, read_bundle, read_json, read_series_csv, write_bundle, write_json, write_manifest,
    Provenance, ReportDoc, MANIFEST_FILE, PROVENANCE_FILE,
};
use crate::metrics::compute_metrics_parts;
use crate::tables::{
    baseline_records, histogram_records, long_records, order_records, write_aggregate,
    write_records, Format, NaicRecord,
};

#[derive(Debug, Parser)]
#[command(
    name = "cgp-lingam",
    version,
    about = "Causal graph process estimation with LiNGAM"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Overrides the seed of the loaded configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of result tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for sweeps across seeds (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a problem and write it as a bundle directory.
    Generate {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Fit a series CSV (rows are time samples) and write report.json.
    Fit {
        series: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        /// Fit only the leading 60% block, as the benchmark does.
        #[arg(long)]
        train_only: bool,
        /// Include per-stage wall-clock times in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Fit every order in a range and write the nAIC table.
    SelectOrder {
        series: PathBuf,
        #[arg(long, default_value_t = 1)]
        min: usize,
        #[arg(long, default_value_t = 6)]
        max: usize,
    },
    /// Run a Monte-Carlo sweep described by the configuration file.
    Benchmark {
        /// Treat the configuration as an order-selection study.
        #[arg(long)]
        order_selection: bool,
    },
    /// Score a fit report against the truth in a bundle, on its test block.
    Metrics { bundle: PathBuf, report: PathBuf },
}

fn load_config<C: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<C> {
    match path {
        Some(p) => read_json(p),
        None => Ok(C::default()),
    }
}

fn out_dir(global: &GlobalOpts) -> Result<PathBuf> {
    let dir = global.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn table_name(stem: &str, format: Format) -> String {
    format!("{stem}.{}", format.extension())
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.global.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global();
    }
    let g = &cli.global;
    match &cli.command {
        Command::Generate {
            samples,
            order,
            nodes,
        } => {
            let mut cfg: GenConfig = load_config(&g.config)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            cfg.n_samples = samples.unwrap_or(cfg.n_samples);
            cfg.order = order.unwrap_or(cfg.order);
            cfg.n_nodes = nodes.unwrap_or(cfg.n_nodes);
            cfg.validate()?;
            let truth = generate::<f64>(&cfg)?;
            write_bundle(&out_dir(g)?, &cfg, &truth)?;
        }
        Command::Fit {
            series,
            order,
            train_only,
            timings,
        } => {
            let mut cfg: FitConfig = load_config(&g.config)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            cfg.order = order.unwrap_or(cfg.order);
            let mut x = read_series_csv(series)?;
            if *train_only {
                let (n_train, _, _) = split_sizes(x.n_samples());
                x = x.slice(0..n_train)?;
            }
            let (report, t) = fit_timed(&x, &cfg)?;
            let doc = ReportDoc::new(&report, x.names(), timings.then_some(t));
            write_json(&out_dir(g)?.join("report.json"), &doc)?;
        }
        Command::SelectOrder { series, min, max } => {
            let mut cfg: FitConfig = load_config(&g.config)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let x = read_series_csv(series)?;
            let sel = select_order(&x, &cfg, *min..=*max)?;
            let rows: Vec<NaicRecord> = sel
                .table
                .iter()
                .map(|r| NaicRecord {
                    m: r.order,
                    naic: r.naic,
                    n_params: r.n_params,
                    jittered: r.jittered,
                    selected: r.order == sel.best_order,
                })
                .collect();
            let dir = out_dir(g)?;
            write_records(&dir.join(table_name("naic", g.format)), g.format, &rows)?;
            write_json(
                &dir.join("report.json"),
                &ReportDoc::new(&sel.best_fit, x.names(), None),
            )?;
        }
        Command::Benchmark { order_selection } => {
            let dir = out_dir(g)?;
            if *order_selection {
                let mut spec: OrderSpec = load_config(&g.config)?;
                if let Some(s) = g.seed {
                    spec.seed = s;
                }
                let rows = run_order_selection(&spec)?;
                let hist = order_histogram(&spec, &rows);
                let files = [
                    table_name("order_selection", g.format),
                    table_name("order_histogram", g.format),
                ];
                write_records(&dir.join(&files[0]), g.format, &order_records(&rows))?;
                write_records(&dir.join(&files[1]), g.format, &histogram_records(&hist))?;
                finish_run(&dir, "benchmark --order-selection", &spec, &files)?;
            } else {
                let mut spec: ExperimentSpec = load_config(&g.config)?;
                if let Some(s) = g.seed {
                    spec.seed = s;
                }
                let result = run_experiment(&spec)?;
                let mut files = vec![
                    table_name("results", g.format),
                    table_name("aggregate", g.format),
                ];
                write_records(&dir.join(&files[0]), g.format, &long_records(&result))?;
                write_aggregate(
                    &dir.join(&files[1]),
                    g.format,
                    &aggregate(&result),
                    spec.baseline,
                )?;
                if spec.baseline {
                    files.push(table_name("baseline", g.format));
                    write_records(
                        &dir.join(&files[2]),
                        g.format,
                        &baseline_records(&result.baseline),
                    )?;
                }
                finish_run(&dir, "benchmark", &spec, &files)?;
            }
        }
        Command::Metrics { bundle, report } => {
            let truth = read_bundle(bundle)?;
            let doc: ReportDoc = read_json(report)?;
            let dag = doc.dag()?;
            let coeffs = doc.coeffs.to_coeffs()?;
            let k = truth.series.n_samples();
            let (n_train, n_val, _) = split_sizes(k);
            let history = coeffs.order().max(truth.coeffs.order());
            if n_train + n_val < history {
                return Err(BenchError::Input(format!(
                    "bundle too short for order {history}"
                )));
            }
            let window = truth.series.slice(n_train + n_val - history..k)?;
            let m = compute_metrics_parts(
                &truth,
                &dag,
                &coeffs,
                doc.config.prune_thresh,
                &window,
                history,
            )?;
            let dir = out_dir(g)?;
            match g.format {
                Format::Json => write_json(&dir.join("metrics.json"), &m)?,
                Format::Csv => write_records(
                    &dir.join("metrics.csv"),
                    Format::Csv,
                    &[MetricsRecord::from(&m)],
                )?,
            }
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct MetricsRecord {
    snr_a_db: crate::tables::Num,
    err_c: f64,
    err_c_padded: bool,
    err_eps: f64,
    err_eps_causal: f64,
    shd: usize,
    rmse_a: f64,
}

impl From<&crate::metrics::Metrics> for MetricsRecord {
    fn from(m: &crate::metrics::Metrics) -> Self {
        Self {
            snr_a_db: crate::tables::Num(m.snr_a),
            err_c: m.err_c,
            err_c_padded: m.err_c_padded,
            err_eps: m.err_eps,
            err_eps_causal: m.err_eps_causal,
            shd: m.shd,
            rmse_a: m.rmse_a,
        }
    }
}

fn finish_run(
    dir: &Path,
    command: &str,
    spec: &impl serde::Serialize,
    tables: &[String],
) -> Result<()> {
    write_json(&dir.join(PROVENANCE_FILE), &Provenance::new(command, spec))?;
    let mut files: Vec<&str> = tables.iter().map(String::as_str).collect();
    files.push(PROVENANCE_FILE);
    debug_assert!(!files.contains(&MANIFEST_FILE));
    write_manifest(dir, &files)?;
    Ok(())
}
