use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("non-finite input: {0}")]
    NumericInput(String),

    /// A configuration value failed validation. `path` is the dotted field path
    /// inside the experiment config (for example `steps.alpha`).
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("diverged at round {round} (|x| = {x_norm:e}, |v| = {v_norm:e}); {detail}")]
    Divergence {
        round: u64,
        x_norm: f64,
        v_norm: f64,
        detail: String,
    },

    #[error("observer copies of node {node} disagree at round {round}")]
    ObserverInconsistency { node: usize, round: u64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidTopology(_) | Error::Parse { .. } | Error::Json(_)
        )
    }
}
