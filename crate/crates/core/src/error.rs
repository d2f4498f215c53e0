use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid filter: {0}")]
    Filter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A solver produced a non-finite value or blew up. `trace` holds the
    /// recent objective history for post-mortem inspection.
    #[error("numerical failure in {solver} at iteration {iteration}: {reason} (recent objectives: {trace:?})")]
    Numerical {
        solver: &'static str,
        iteration: usize,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape_mismatch",
            Error::Geometry(_) => "invalid_geometry",
            Error::Filter(_) => "invalid_filter",
            Error::Config(_) => "config_error",
            Error::Degenerate(_) => "degenerate_input",
            Error::Numerical { .. } => "numerical_failure",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Degenerate(_))
    }
}
