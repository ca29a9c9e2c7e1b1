use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported QAM order {0} (expected 4, 16 or 64)")]
    UnsupportedQamOrder(u32),

    #[error("angle {0} rad outside (-pi/2, pi/2)")]
    AngleOutOfRange(f64),

    #[error("range {range} m below the Fresnel limit {limit} m")]
    RangeTooShort { range: f64, limit: f64 },

    #[error("scene has no targets")]
    EmptyScene,

    #[error("invalid unfolding mode {0}")]
    InvalidMode(usize),

    #[error("invalid mode pair ({0}, {1})")]
    InvalidModePair(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid smoothing plan: {0}")]
    InvalidPlan(String),

    #[error("rank {rank} exceeds the limit {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("rank must be at least 1")]
    ZeroRank,

    #[error("subspace is rank deficient, decomposition failed")]
    RankDeficient,

    #[error("receive array length {0} is even, expected 2*gx+1")]
    EvenArray(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("truth vector has zero norm")]
    ZeroNormTruth,

    #[error("count mismatch: {truth} truth entries, {est} estimates")]
    CountMismatch { truth: usize, est: usize },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("file not found: {0}")]
    NotFound(PathBuf),

    #[error("bad tensor file: {0}")]
    BadTensorFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
