use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading an NNCK checkpoint.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"NNCK\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt offsets: {0}")]
    CorruptOffsets(String),
}

/// Coarse classification used for CLI exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture between {prev} and layer {layer}: {reason}")]
    InvalidSpec {
        prev: String,
        layer: usize,
        reason: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network parameters: {0}")]
    InvalidParams(String),
    #[error("invalid scale at interface {interface}, unit {unit}: {value}")]
    InvalidScale {
        interface: usize,
        unit: usize,
        value: f64,
    },
    #[error("invalid permutation at interface {interface}: {reason}")]
    InvalidPermutation { interface: usize, reason: String },
    #[error("softmax shift not applicable: {0}")]
    NoSoftmaxShift(String),
    #[error("degenerate min-mass problem: layer {layer} unit {unit} has no {side} mass term, the scale can run off to {direction}")]
    Degenerate {
        layer: usize,
        unit: usize,
        side: &'static str,
        direction: &'static str,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("loss became NaN at step {step}")]
    NanLoss { step: usize },
    #[error("no linearly separable sample after {retries} retries")]
    NotSeparable { retries: usize },
    #[error("zero median distance: all points identical")]
    ZeroMedianDistance,
    #[error("empty sample: {0}")]
    EmptySample(String),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("permutation tracking was disabled for this trace")]
    TrackingDisabled,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Degenerate { .. }
            | Error::NonFinite(_)
            | Error::NanLoss { .. }
            | Error::ZeroMedianDistance
            | Error::ZeroVariance(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
