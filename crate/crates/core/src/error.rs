use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value")]
    MissingCell { row: usize, column: String },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("column `{0}` not found in header")]
    UnknownColumn(String),

    #[error("feature set is empty")]
    EmptyFeatureSet,

    #[error("label `{value}` in row {row} is not declared as positive or negative")]
    UnknownLabel { row: usize, value: String },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("empty index set")]
    EmptyIndexSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample ids of the feature matrix and augmented features differ")]
    MisalignedSamples,

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("index {index} out of range for vocabulary of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("triple file line {line}: {reason}")]
    TripleFormat { line: usize, reason: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("ROC requires both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
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

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
