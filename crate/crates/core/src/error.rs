use std::path::PathBuf;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of range or missing.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// An argument lies outside the domain of a formula (e.g. zero distance).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs that make a strategy meaningless, such as an AP whose users all have zero gain.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A user has no serving AP, or the serving maps disagree.
    #[error("association error: {0}")]
    Association(String),

    /// A factorization, solve or consistency check failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// A drop failed; the seed reproduces it.
    #[error("drop {drop_id} (seed {seed:#018x}) failed: {source}")]
    Drop {
        drop_id: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True when the root cause is a configuration problem.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Drop { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// True for numerical, domain and degenerate-input failures.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Domain(_) | Error::DegenerateInput(_) => true,
            Error::Association(_) => true,
            Error::Drop { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
