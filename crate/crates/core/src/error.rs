use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Network failure or timeout that survived every retry.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("credential rejected: {0}")]
    Auth(String),
    /// The backend cannot honour a request (typically token logprobs).
    #[error("capability error: {0}")]
    Capability(String),
    /// Non-transient rejection or malformed payload from the backend.
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("mock fixture has no answer for instance `{0}`")]
    UnknownInstance(String),

    #[error("template error: {0}")]
    Template(String),
    #[error("invalid instance `{id}`: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("embedder error: {0}")]
    Embedder(String),
    #[error("degenerate clustering: {distinct} distinct points for {clusters} clusters")]
    DegenerateClustering { distinct: usize, clusters: usize },

    #[error("demonstrations leak evaluation instance `{0}`")]
    Leakage(String),
    #[error("every candidate category is empty")]
    AllDropped,
    #[error("missing records file {}", .0.display())]
    MissingRecords(PathBuf),

    #[error("{}:{line}: {message}", .path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: unknown label `{label}`", .path.display())]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },
    #[error("infeasible split: {0}")]
    InfeasibleBalance(String),
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for structured reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Transport(_) => "transport",
            Error::Auth(_) => "auth",
            Error::Capability(_) => "capability",
            Error::Protocol(_) => "protocol",
            Error::UnknownInstance(_) => "unknown_instance",
            Error::Template(_) => "template",
            Error::InvalidInstance { .. } => "invalid_instance",
            Error::InvalidLabelSet(_) => "invalid_label_set",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Embedder(_) => "embedder",
            Error::DegenerateClustering { .. } => "degenerate_clustering",
            Error::Leakage(_) => "leakage",
            Error::AllDropped => "all_dropped",
            Error::MissingRecords(_) => "missing_records",
            Error::Format { .. } => "format",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::InfeasibleBalance(_) => "infeasible_balance",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
