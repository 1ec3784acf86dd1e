use thiserror::Error;

/// Errors produced by estimation, model, and experiment operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value at row {row}, column {col} is not finite")]
    NonFiniteValue { row: usize, col: usize },

    #[error("csv row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("dataset must have at least {min_n} rows and {min_d} columns (got {n}x{d})")]
    DatasetTooSmall {
        n: usize,
        d: usize,
        min_n: usize,
        min_d: usize,
    },

    #[error("bin width must be positive and finite (got {0})")]
    InvalidBinWidth(f64),

    #[error("bin width constant must be positive and finite (got {0})")]
    InvalidBinWidthConstant(f64),

    #[error("vertex {vertex} out of range for dimension {d}")]
    VertexOutOfRange { vertex: usize, d: usize },

    #[error("pair histogram requires two distinct columns (got {0} twice)")]
    SelfPair(usize),

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("histogram counts sum to {got}, expected {expected}")]
    CountMismatch { got: u64, expected: u64 },

    #[error("edge weight graph is not connected")]
    DisconnectedGraph,

    #[error("edge set is not a spanning tree: {0}")]
    InvalidTree(String),

    #[error("dimension {d} outside supported range {min}..={max}")]
    DimensionOutOfRange { d: usize, min: usize, max: usize },

    #[error("need at least {min} stored weights (got {got})")]
    TooFewWeights { got: usize, min: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point coordinate {index} is not finite")]
    NonFiniteCoordinate { index: usize },

    #[error("coupling must satisfy |a| < 1 (got {0})")]
    InvalidCoupling(f64),

    #[error("model file is invalid: {0}")]
    ModelSchema(String),

    #[error("reference density vanished at a sampled point (corrupt sampler)")]
    ReferenceDensityZero,

    #[error("monte carlo sample count {got} below minimum {min}")]
    TooFewMcSamples { got: usize, min: usize },

    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
