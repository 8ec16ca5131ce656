use std::path::PathBuf;

use thiserror::Error;

/// Which axis of a joint fit lacks spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    ModelSize,
    TokenHorizon,
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dimension::ModelSize => f.write_str("model size (n_params)"),
            Dimension::TokenHorizon => f.write_str("token horizon"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row could not be decoded. `row` is 1-based.
    #[error("row {row}: {}{message}", field.as_deref().map(|f| format!("field `{f}`: ")).unwrap_or_default())]
    Parse {
        row: usize,
        field: Option<String>,
        message: String,
    },

    /// A row decoded but violates a record invariant. `row` is 1-based.
    #[error("row {row}: invalid `{field}`: {message}")]
    Validation { row: usize, field: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least {required} distinct learning rates, got {found}")]
    Unfittable { required: usize, found: usize },

    #[error("fitted curvature {curvature:.3e} is not positive; widen the learning-rate sweep")]
    NonConvex { curvature: f64 },

    #[error("R^2 is undefined: observed values have zero variance")]
    UndefinedRSquared,

    #[error("all points share the same {0}; the joint law needs at least two distinct values")]
    DegenerateSpan(Dimension),

    #[error("optimizer did not converge from any start (best objective {best_objective:.6e})")]
    NotConverged { best_objective: f64 },

    #[error("every resample failed for `{quantity}`")]
    AllResamplesFailed { quantity: String },

    #[error("out of domain: {0}")]
    OutOfDomain(String),
}

impl Error {
    /// True for numerical fitting failures as opposed to bad input.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            Error::Unfittable { .. }
                | Error::NonConvex { .. }
                | Error::UndefinedRSquared
                | Error::DegenerateSpan(_)
                | Error::NotConverged { .. }
                | Error::AllResamplesFailed { .. }
        )
    }

    /// Short machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::InvalidInput(_) => "invalid_input",
            Error::Unfittable { .. } => "unfittable",
            Error::NonConvex { .. } => "non_convex",
            Error::UndefinedRSquared => "undefined_r_squared",
            Error::DegenerateSpan(_) => "degenerate_span",
            Error::NotConverged { .. } => "not_converged",
            Error::AllResamplesFailed { .. } => "all_resamples_failed",
            Error::OutOfDomain(_) => "out_of_domain",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
