use std::path::PathBuf;

use thiserror::Error;

/// Failures that stop a command outright (exit code 2). Defects in the
/// checked content are findings, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("path does not exist: {}", .0.display())]
    MissingPath(PathBuf),
    #[error("not a directory: {}", .0.display())]
    NotADirectory(PathBuf),
    #[error("cannot walk {}: {source}", path.display())]
    Walk { path: PathBuf, source: walkdir::Error },
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid URL: {0}")]
    Url(#[from] crate::url::UrlError),
    #[error(transparent)]
    Probe(#[from] crate::probe::ProbeError),
    #[error("invalid pattern `{0}`: {1}")]
    Pattern(String, String),
    #[error("cannot start server on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("main XML file {} is unusable: {reason}", path.display())]
    MainXml { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
}
