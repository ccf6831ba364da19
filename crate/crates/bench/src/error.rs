use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] cgp_lingam::Error),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// 2 for bad input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

/// Short machine-readable tag for a failed cell, e.g. `lingam:non_convergence`.
pub fn error_tag(err: &cgp_lingam::Error) -> String {
    use cgp_lingam::Error as E;
    let kind = |e: &E| match e {
        E::InvalidArgument(_) => "invalid_argument",
        E::DimensionMismatch { .. } => "dimension_mismatch",
        E::InsufficientData { .. } => "insufficient_data",
        E::Numerical(_) => "numerical",
        E::NonConvergence { .. } => "non_convergence",
        E::Degenerate(_) => "degenerate",
        E::Identifiability(_) => "identifiability",
        E::UnstableProcess { .. } => "unstable_process",
        E::Divergence(_) => "divergence",
        E::InStage { .. } => "stage",
    };
    match err {
        E::InStage { stage, .. } => format!("{}:{}", stage_name(*stage), kind(err.root())),
        other => kind(other).to_string(),
    }
}

fn stage_name(stage: cgp_lingam::Stage) -> &'static str {
    use cgp_lingam::Stage as S;
    match stage {
        S::LagFilters => "stage1",
        S::Lingam => "lingam",
        S::Coefficients => "stage3",
        S::OrderSelection => "order",
        S::Baseline => "baseline",
    }
}
