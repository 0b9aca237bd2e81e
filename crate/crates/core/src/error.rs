use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite value in an activation or gradient. `layer` is the index
    /// into `NetworkSpec::layers` when known.
    #[error("non-finite {what}{}", layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Numeric { what: String, layer: Option<usize> },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch})")]
    Diverged {
        epoch: usize,
        last_finite_epoch: usize,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("cannot parse {value:?} at row {row}, column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("value {value} out of range at row {row}, column `{column}`: {reason}")]
    Range {
        row: usize,
        column: String,
        value: f64,
        reason: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(
        "exact Shapley enumeration supports at most {limit} features, got {features}; \
         use the sampled estimator instead"
    )]
    Capacity { features: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(what: impl Into<String>, layer: Option<usize>) -> Self {
        Error::Numeric {
            what: what.into(),
            layer,
        }
    }

    /// Process exit code for the command line tool.
    ///
    /// 2 usage/config, 3 data, 4 numeric/training, 5 capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) | Error::Spec(_) => 2,
            Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::Range { .. }
            | Error::Format(_)
            | Error::Shape(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Numeric { .. } | Error::Diverged { .. } => 4,
            Error::Capacity { .. } => 5,
        }
    }
}
