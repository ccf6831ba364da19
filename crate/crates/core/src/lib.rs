//! Estimation of a causal graph process with non-Gaussian disturbances.
//!
//! A single DAG `A` explains both the instantaneous effects and, through
//! graph polynomial filters `P_i(A, c) = sum_j c_ij A^j`, the lagged effects:
//!
//! ```text
//! x(k) = A x(k) + sum_{i=1..M} P_i(A, c) x(k - i) + e(k)
//! ```
//!
//! The estimator runs in three stages (see [`pipeline::fit`]): alternating
//! recovery of the reduced-form lag filters with a commutativity penalty,
//! ICA-based LiNGAM on the stage-1 residuals for `A`, and L1-regularized
//! recovery of `c`. All numerical code is generic over [`Real`]; the aliases
//! below fix the scalar to `f64` or `f32`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod lingam;
pub mod pipeline;
pub mod scalar;
pub mod series;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result, Stage};
pub use graph::{DagMatrix, PolyCoeffs, SquareMatrix};
pub use pipeline::{FitConfig, FitReport, LagFilterSet};
pub use scalar::Real;
pub use series::TimeSeries;
pub use synth::{GenConfig, GroundTruth};

pub type DagMatrixF64 = graph::DagMatrix<f64>;
pub type DagMatrixF32 = graph::DagMatrix<f32>;
pub type PolyCoeffsF64 = graph::PolyCoeffs<f64>;
pub type PolyCoeffsF32 = graph::PolyCoeffs<f32>;
pub type TimeSeriesF64 = series::TimeSeries<f64>;
pub type TimeSeriesF32 = series::TimeSeries<f32>;
pub type GroundTruthF64 = synth::GroundTruth<f64>;
pub type FitReportF64 = pipeline::FitReport<f64>;
pub type FitReportF32 = pipeline::FitReport<f32>;
