use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
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

    #[error("unknown type `{0}`")]
    UnknownType(String),

    #[error("invalid type hierarchy: {0}")]
    Hierarchy(String),

    #[error("mention {mention} has an empty candidate type set")]
    EmptyCandidates { mention: usize },

    #[error("feature vocabulary is empty after frequency filtering (min_count = {min_count})")]
    EmptyVocabulary { min_count: u64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("non-finite value in {block}")]
    NonFinite { block: &'static str },

    #[error("training diverged at iteration {iteration}: objective {current} vs {previous} five iterations earlier")]
    Diverged {
        iteration: usize,
        current: f64,
        previous: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model/corpus mismatch: {0}")]
    Mismatch(String),

    #[error("mention {mention} carries no document id")]
    MissingDocument { mention: usize },

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("mention {mention} has no in-vocabulary features")]
    Untypeable { mention: usize },
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
}
