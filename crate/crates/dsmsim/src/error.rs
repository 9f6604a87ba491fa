//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or profile failed structural validation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// An iterative solve stopped before reaching its tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// A quantity that must be positive (or nonnegative) was not.
    #[error("numeric domain error: {0}")]
    Domain(String),

    /// A file had the wrong shape, header, or field value.
    #[error("malformed {kind} data{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Parse {
        kind: &'static str,
        location: Option<String>,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("toml error in {context}: {message}")]
    Toml { context: String, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn no_convergence(msg: impl Into<String>) -> Self {
        Error::NoConvergence(msg.into())
    }

    pub fn parse(kind: &'static str, location: Option<String>, msg: impl Into<String>) -> Self {
        Error::Parse {
            kind,
            location,
            message: msg.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
