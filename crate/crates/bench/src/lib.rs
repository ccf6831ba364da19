//! Experiment harness, metrics and command-line tooling for `cgp-lingam`.

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod tables;

pub use error::{BenchError, Result};
pub use harness::{run_experiment, run_order_selection, ExperimentSpec, LambdaGrid, OrderSpec};
pub use metrics::{compute_metrics, Metrics};
