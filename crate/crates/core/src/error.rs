//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by trace loading, configuration handling, training,
/// evaluation, and simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file is not a classic pcap capture (bad magic, truncated header,
    /// unsupported link type, ...).
    #[error("malformed capture {path}: {reason}")]
    PcapFormat { path: PathBuf, reason: String },

    /// IPv6 frames are not supported; captures are expected to be IPv4/TCP.
    #[error("capture {path} contains IPv6 traffic (record {record}); only IPv4 is supported")]
    Ipv6Unsupported { path: PathBuf, record: u64 },

    #[error("malformed label sidecar {path}: {reason}")]
    LabelFormat { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Balanced accuracy is undefined when one of the classes is empty.
    #[error("balanced accuracy undefined: {0}")]
    DegenerateClasses(String),

    /// Classified clients must be a subset of the observed client universe.
    #[error("inconsistent classification: {0}")]
    Inconsistent(String),

    /// Trace synthesis or merging failed (address exhaustion, collisions, ...).
    #[error("trace synthesis error: {0}")]
    Synth(String),

    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn pcap(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::PcapFormat { path: path.into(), reason: reason.into() }
    }
}
