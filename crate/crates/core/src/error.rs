use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp {time} is earlier than the previous cell")]
    DecreasingTimestamp { line: usize, time: f64 },
    #[error("invalid dataset spec `{0}` (expected <A>x<B>+<C>)")]
    InvalidSpec(String),
    #[error("requested {requested} but dataset only has {available}")]
    SpecExceedsDataset { requested: String, available: String },
    #[error("cannot build {k} folds: smallest monitored page has {min_instances} instances")]
    TooManyFolds { k: usize, min_instances: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("class has {have} elements but the distance variant needs {needed}")]
    ClassTooSmall { needed: usize, have: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("match vectors are over different class rosters")]
    RosterMismatch,
    #[error("label {0} is not part of the class roster")]
    UnknownLabel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("no results to render")]
    EmptyResults,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
