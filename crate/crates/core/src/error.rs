use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("row-count mismatch: data has {data} rows, labels have {labels}")]
    RowCountMismatch { data: usize, labels: usize },

    #[error("line {line}, field {field}: cannot parse {token:?} as a number")]
    Parse {
        line: usize,
        field: usize,
        token: String,
    },

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no features remain after {0}")]
    NoFeaturesRemain(String),

    #[error("column {column_id} is constant in the fitting data")]
    ConstantColumn { column_id: usize },

    #[error("column {column_id} has no present values in the fitting data")]
    AllMissingColumn { column_id: usize },

    #[error("unknown column {0}")]
    UnknownColumn(usize),

    #[error("column mismatch: expected {expected:?}, got {got:?}")]
    ColumnMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("dataset still has {0} missing cells")]
    MissingValues(usize),

    #[error("class error: {0}")]
    Class(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at step {step}: non-finite loss (trace tail {trace_tail:?})")]
    Divergence { step: usize, trace_tail: Vec<f64> },

    #[error("leakage guard: test partition passed to {0}")]
    Leakage(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Wraps the error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
