use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph has no events")]
    EmptyGraph,

    #[error("player index {index} out of range for {players} players")]
    InvalidPlayer { index: usize, players: usize },

    #[error("{players} players exceed the enumeration limit of {limit}")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("model evaluation failed for coalition {coalition}: {source}")]
    Coalition {
        coalition: String,
        #[source]
        source: Box<Error>,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("bridge protocol error: {0}")]
    Protocol(String),

    #[error("bridge timed out after {0:?}")]
    Timeout(std::time::Duration),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
