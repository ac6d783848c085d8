use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid type path: {0}")]
    InvalidPath(String),

    #[error("unknown type `{0}`")]
    UnknownType(String),

    #[error("leaf type `{leaf}` maps to both {first} and {second}")]
    SchemaConflict {
        leaf: String,
        first: String,
        second: String,
    },

    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),

    #[error("ambiguous index: account `{account}` maps to both {first} and {second}")]
    AmbiguousIndex {
        account: String,
        first: String,
        second: String,
    },

    #[error("conflicting gold labels for entity `{entity}`: {first} vs {second}")]
    ConflictingGold {
        entity: String,
        first: String,
        second: String,
    },

    #[error("embedding format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("dimension mismatch for `{id}`: expected {expected}, got {actual}")]
    DimMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in vector `{0}`")]
    NonFinite(String),

    #[error("embedding sets share no ids")]
    EmptyIntersection,

    #[error("duplicate segment name `{0}`")]
    DuplicateSegment(String),

    #[error("invalid segment map: {0}")]
    InvalidSegments(String),

    #[error("invalid model shape: {0}")]
    InvalidShape(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label index {index} out of range for vocabulary of {size}")]
    UnknownLabel { index: usize, size: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("unsupported model version {found} (expected {expected})")]
    ModelVersion { found: String, expected: u32 },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("entity `{0}` has no prediction")]
    MissingPrediction(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
