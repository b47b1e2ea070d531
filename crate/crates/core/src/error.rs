use thiserror::Error;

/// Errors surfaced by every component of the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("warmup error: {0}")]
    Warmup(String),
    #[error("collection error: {0}")]
    Collection(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable tag used in machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Numerical(_) => "numerical",
            Error::Domain(_) => "domain",
            Error::Usage(_) => "usage",
            Error::Warmup(_) => "warmup",
            Error::Collection(_) => "collection",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
