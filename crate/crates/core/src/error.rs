use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    LagFilters,
    Lingam,
    Coefficients,
    OrderSelection,
    Baseline,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::LagFilters => "stage 1 (lag filters)",
            Stage::Lingam => "stage 2 (instantaneous DAG)",
            Stage::Coefficients => "stage 3 (polynomial coefficients)",
            Stage::OrderSelection => "order selection",
            Stage::Baseline => "VAR-LiNGAM baseline",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("insufficient data: {samples} samples, need more than {needed}")]
    InsufficientData { samples: usize, needed: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: &'static str, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("identifiability failure: {0}")]
    Identifiability(String),

    #[error("unstable process: sample norm exploded at time index {time_index}")]
    UnstableProcess { time_index: usize },

    #[error("objective diverged: {0}")]
    Divergence(String),

    #[error("{stage}: {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn dims(op: &'static str, expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ Error::InStage { .. } => e,
            e => Error::InStage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::InStage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by the caller's input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::InsufficientData { .. }
        )
    }
}
