use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("PDAG has no consistent extension: {0}")]
    Extension(String),

    #[error("graph contains a directed cycle")]
    Cyclic,

    #[error("training diverged ({0}); try a lower learning rate")]
    Divergence(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("graph format error on line {line}: {message}")]
    GraphFormat { line: usize, message: String },

    #[error("model bundle error: {0}")]
    Bundle(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
