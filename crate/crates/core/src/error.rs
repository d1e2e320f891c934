use thiserror::Error;

/// Errors raised across the model, simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty Dirichlet row")]
    EmptyRow,

    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("observation symbol {0} outside model alphabet of {1}")]
    UnknownSymbol(u32, usize),

    #[error("candidate at ({x:.3}, {y:.3}) is closer than {spacing} to node {node}")]
    SpacingViolation {
        x: f64,
        y: f64,
        spacing: f64,
        node: usize,
    },

    #[error("node {0} already has the maximum number of adjacent states")]
    NeighbourCap(usize),

    #[error("empty batch")]
    EmptyBatch,

    #[error("model update refused while a kidnap is suspected")]
    PermissionDenied,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("map parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },

    #[error("event error: {0}")]
    Event(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("environment mismatch: {0}")]
    EnvironmentMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
