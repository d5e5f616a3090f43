use std::path::PathBuf;

/// Errors produced while loading, aggregating, exporting or evaluating views.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("unrankable user `{0}`: not present in any view")]
    UnrankableUser(String),

    #[error("unscorable user `{0}`: no community assignment")]
    UnscorableUser(String),

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("user `{user}`: {source}")]
    ForUser {
        user: String,
        #[source]
        source: Box<Error>,
    },

    #[error("source `{source_id}`: {source}")]
    ForSource {
        source_id: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_user(user: &str, source: Error) -> Self {
        Error::ForUser {
            user: user.to_string(),
            source: Box::new(source),
        }
    }

    pub(crate) fn for_source(source_id: &str, source: Error) -> Self {
        Error::ForSource {
            source_id: source_id.to_string(),
            source: Box::new(source),
        }
    }

    /// Innermost error, with user/source context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::ForUser { source, .. } | Error::ForSource { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Manifest(_) => "manifest",
            Error::Lookup(_) => "lookup",
            Error::UnrankableUser(_) => "unrankable_user",
            Error::UnscorableUser(_) => "unscorable_user",
            Error::UndefinedMeasure(_) => "undefined_measure",
            Error::Integrity(_) => "integrity",
            Error::Usage(_) => "usage",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
            Error::ForUser { .. } | Error::ForSource { .. } => unreachable!(),
        }
    }

    /// Process exit code: 1 validation, 2 I/O, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Io { .. } => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
