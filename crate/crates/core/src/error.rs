use tablesim_tensor::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("pair references unknown table id \"{0}\"")]
    DanglingId(String),
    #[error("duplicate pair ({0}, {1})")]
    DuplicatePair(String, String),
    #[error("unknown table id \"{0}\"")]
    UnknownTable(String),
    #[error("invalid data: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("embedding file: {0}")]
    Embedding(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
