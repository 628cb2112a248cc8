use std::path::PathBuf;

/// Errors raised by the clustering toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("node id {id} out of range for {n_nodes} nodes ({path}:{line})")]
    NodeOutOfRange {
        path: PathBuf,
        line: usize,
        id: usize,
        n_nodes: usize,
    },

    #[error("row count mismatch: {what} has {got} rows, expected {expected}")]
    RowMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("bad matrix file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty marginal")]
    EmptyMarginal,

    #[error("invalid marginal: {0}")]
    Marginal(String),

    #[error("adjacency must be binary, found value {0}")]
    NotBinary(f64),

    #[error("prototype graph entries must lie in [0, 1], found {0}")]
    PrototypeGraphRange(f64),

    #[error("coupling row {row} has zero mass; increase epsilon")]
    DegenerateCoupling { row: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
