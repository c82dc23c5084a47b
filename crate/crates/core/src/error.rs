use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: rejected lexicon entry {entry:?}: {reason}")]
    RejectedEntry {
        path: PathBuf,
        line: usize,
        entry: String,
        reason: &'static str,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid corpus layout: {0}")]
    CorpusLayout(String),

    #[error("document {title:?} has no words")]
    EmptyDocument { title: String },

    #[error("feature set {0} is empty after pruning unattested words")]
    EmptyFeatureSet(String),

    #[error("lexicon order does not match feature set {name}: expected {expected}")]
    LexiconOrder { name: String, expected: String },

    #[error("author {author} has {rows} rows, at least 4 are required to split")]
    StratumTooSmall { author: usize, rows: usize },

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("nu = {nu} is infeasible for classes ({a}, {b}); the largest feasible nu is {max_nu}")]
    InfeasibleNu { a: usize, b: usize, nu: f64, max_nu: f64 },

    #[error("class {0} has no output gene in the class map")]
    UnmappedClass(usize),

    #[error("length mismatch: {targets} targets vs {outputs} outputs")]
    LengthMismatch { targets: usize, outputs: usize },

    #[error("{0}")]
    Metrics(String),

    #[error("invalid experiment plan: {0}")]
    Plan(String),

    #[error("missing data file {0}")]
    MissingData(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
