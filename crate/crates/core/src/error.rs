use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("horizon too large for exact enumeration: {0}")]
    HorizonTooLarge(String),

    /// A numerical target could not be met within the configured limits.
    #[error("tolerance {requested:e} unreachable, best bound {achieved:e}: {context}")]
    ToleranceUnreachable {
        requested: f64,
        achieved: f64,
        context: String,
    },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
