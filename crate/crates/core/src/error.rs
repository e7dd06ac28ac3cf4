use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems exit with 2, bad or missing data with 3 and numerical failures
/// with 4 (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("vocabulary is empty (min_count = {min_count})")]
    EmptyVocabulary { min_count: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for vocabulary of size {size}")]
    Index { index: usize, size: usize },

    #[error("unknown word {word:?}; closest candidates: {candidates:?}")]
    UnknownWord { word: String, candidates: Vec<String> },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("undefined cosine for {word:?} at month {month}: zero vector")]
    ZeroVector { word: String, month: u32 },

    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch for {file}")]
    Checksum { file: String },

    #[error("missing model file {0}")]
    MissingFile(PathBuf),

    #[error("model error: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyCorpus
            | Error::EmptyVocabulary { .. }
            | Error::Index { .. }
            | Error::UnknownWord { .. }
            | Error::Version { .. }
            | Error::Checksum { .. }
            | Error::MissingFile(_)
            | Error::Model(_)
            | Error::Csv(_) => 3,
            Error::Domain(_)
            | Error::Degenerate(_)
            | Error::RankDeficient(_)
            | Error::UndefinedCorrelation(_)
            | Error::ZeroVector { .. }
            | Error::Numeric(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
