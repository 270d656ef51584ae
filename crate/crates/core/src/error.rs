use std::io;

use thiserror::Error;

pub type Result<T, E = HivtpError> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// [`HivtpError::is_io`] separates I/O failures from validation failures;
/// the command-line front end maps them to exit codes 1 and 2.
#[derive(Debug, Error)]
pub enum HivtpError {
    #[error("bad magic: expected \"HVTD\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported HVTD version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("trailing bytes: expected {expected} payload bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("NaN in payload at flat offset {0}")]
    NaNPayload(usize),
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("layer indices are 1-based (got 0)")]
    LayerIndexZero,
    #[error("layer {layer} out of range: stack has {available} layers")]
    LayerOutOfRange { layer: usize, available: usize },
    #[error("invalid layer set: {0}")]
    InvalidLayerSet(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} is not n*n + 1 for any grid side n >= 2")]
    NotPerfectSquare(usize),
    #[error("invalid attention: {0}")]
    InvalidAttention(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),

    #[error("grid side {n} is not divisible by {what} {divisor}")]
    NotDivisible {
        n: usize,
        divisor: usize,
        what: &'static str,
    },
    #[error("top percent must satisfy 0 < k <= 100 (got {0})")]
    InvalidPercent(f64),
    #[error("region quota {quota} exceeds region size {region_size}")]
    QuotaExceedsRegion { quota: usize, region_size: usize },
    #[error("index {0} appears in both the global and local sets")]
    OverlapDetected(usize),
    #[error("index {index} out of range for {count} tokens")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),
    #[error("malformed measurements: {0}")]
    Measurements(String),

    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

impl HivtpError {
    pub fn is_io(&self) -> bool {
        matches!(self, HivtpError::Io(_))
    }
}
