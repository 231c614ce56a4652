use thiserror::Error;

/// Errors surfaced by the library. The CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("environment produced a non-finite value at x = {x}")]
    Environment { x: f64 },

    #[error("step size underflow at x = {x} (h = {h:e}); equation too stiff")]
    Stiff { x: f64, h: f64 },

    #[error("no bounded solution on the window at λ = {lambda}")]
    NoBoundedSolution { lambda: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

/// Labels errors of a pipeline stage.
pub fn stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        source: Box::new(e),
    })
}

pub type Result<T> = std::result::Result<T, Error>;
