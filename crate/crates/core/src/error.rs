use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unknown architecture `{name}` (known: {known})")]
    UnknownArch { name: String, known: String },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid pruning rate {rate} for layer `{layer}`: {reason}")]
    InvalidRate {
        layer: String,
        rate: f64,
        reason: &'static str,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("epoch {epoch} out of range for t_max {t_max}")]
    EpochOutOfRange { epoch: usize, t_max: usize },

    #[error("index {index} out of range for {len} filters")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("non-finite loss at epoch {epoch} (first non-finite tensor: {layer})")]
    NonFinite { epoch: usize, layer: String },

    #[error("not compactible: alpha not snapped, layer `{layer}` filter {filter} is nonzero")]
    NotCompactible { layer: String, filter: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the command line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::LabelOutOfRange { .. } => "label",
            Error::UnknownArch { .. } => "unknown-arch",
            Error::InvalidArch(_) => "arch",
            Error::InvalidRate { .. } => "rate",
            Error::Config(_) | Error::Parse { .. } => "config",
            Error::EpochOutOfRange { .. } => "epoch",
            Error::IndexOutOfRange { .. } => "index",
            Error::Invariant(_) => "invariant",
            Error::NonFinite { .. } => "non-finite",
            Error::NotCompactible { .. } => "not-compactible",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 for bad input, 3 for numeric aborts, 4 for invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            Error::Invariant(_) | Error::NotCompactible { .. } => 4,
            _ => 2,
        }
    }
}
