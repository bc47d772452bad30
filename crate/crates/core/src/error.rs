use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("line {line}: label value `{value}` is not binary (expected 0 or 1)")]
    NonBinaryLabel { line: u64, value: String },

    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericCell { line: u64, column: String, value: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("both classes are required but only {0:?} rows are present")]
    SingleClass(crate::data::Label),

    #[error("density ratio denominator underflows to zero at {x:?}")]
    DenominatorUnderflow { x: Vec<f64> },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("k-means could not produce {m} non-empty clusters: {reason}")]
    EmptyClusters { m: usize, reason: String },

    #[error("training failed at n = {n}, seed = {seed}: {source}")]
    StudyCell {
        n: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
