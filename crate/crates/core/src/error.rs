use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AceError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid axis {axis} for tensor of rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("space mismatch: expected {expected}, got {got}")]
    SpaceMismatch { expected: String, got: String },

    #[error("group {group} cannot act on {space}")]
    UnsupportedAction { group: String, space: String },

    #[error("group {0} is too large to enumerate; use sampling instead")]
    NotEnumerable(String),

    #[error("group element {element} does not belong to {group}")]
    ForeignElement { element: String, group: String },

    #[error("non-finite weights in {0}")]
    NonFiniteWeights(String),

    #[error("length mismatch in {op}: {left} vs {right}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dual invariant violated: {0}")]
    DualInvariant(String),

    #[error("operation {op} is not available in {mode} mode")]
    WrongMode { op: &'static str, mode: String },

    #[error("parameter {0} has no gradient; run backward first")]
    MissingGradient(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step}: objective {value}")]
    Diverged { step: u64, value: f64 },

    #[error("format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("corrupt payload: {0}")]
    Corrupt(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AceError {
    fn from(err: std::io::Error) -> Self {
        AceError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AceError>;
