use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("sequence shorter than kernel (length {len}, kernel {kernel})")]
    SequenceShorterThanKernel { len: usize, kernel: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("dropout probability must lie in [0, 1), got {0}")]
    InvalidProbability(f64),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("battery {battery}: field `{field}`: {detail}")]
    Field {
        battery: String,
        field: String,
        detail: String,
    },

    #[error("battery {battery}: has {have} cycles, need at least {need}")]
    TooFewCycles {
        battery: String,
        have: usize,
        need: usize,
    },

    #[error("battery {0}: censored record (capacity never fell below 80% of nominal)")]
    Censored(String),

    #[error("battery {0}: cycle life is unknown")]
    MissingCycleLife(String),

    #[error("{0}")]
    Data(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    Diverged {
        epoch: usize,
        last_finite: Option<usize>,
        report: Box<crate::trainer::RunReport>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
