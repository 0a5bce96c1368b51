use thiserror::Error;

/// Unified error type for construction, validation and run failures.
///
/// Variants carry enough context to name the offending object; callers that
/// need machine-readable detail (the CLI exit-code mapping, test assertions)
/// match on the variant rather than the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid map construction: {0}")]
    Map(String),

    #[error("map evaluated outside its domain of definition at ({x}, {y})")]
    MapDomain { x: f64, y: f64 },

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("invalid set configuration: {0}")]
    Sets(String),

    #[error("admissibility failure: {0}")]
    Admissible(String),

    #[error("winding computation needs refinement: {0}")]
    Winding(String),

    #[error("pipeline precondition failed: {0}")]
    Pipeline(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("dynamics failure: {0}")]
    Dynamics(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Exit code the CLI maps this error to (2 config, 3 runtime).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Serde(_) => 2,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
