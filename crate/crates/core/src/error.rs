use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum CcplError {
    #[error("stain matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("invalid stain matrix: {0}")]
    InvalidStainMatrix(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("image of {width}x{height} is too small for a {rows}x{cols} block grid")]
    DimensionTooSmall {
        width: usize,
        height: usize,
        rows: usize,
        cols: usize,
    },

    #[error("image of {width}x{height} is too small (minimum side {min_side})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_side: usize,
    },

    #[error("channel statistics were computed with different configurations: {0}")]
    ConfigMismatch(String),

    #[error("zero variance input")]
    ZeroVariance,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("feature file has bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("feature file is truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },

    #[error("feature manifest lists {manifest} identifiers but the file holds {count} rows")]
    ManifestMismatch { manifest: usize, count: usize },

    #[error("objective needs at least one image pair")]
    EmptyPairs,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CcplError>;

pub(crate) fn dims_mismatch(a: (usize, usize), b: (usize, usize)) -> CcplError {
    CcplError::DimensionMismatch {
        left: format!("{}x{}", a.0, a.1),
        right: format!("{}x{}", b.0, b.1),
    }
}
