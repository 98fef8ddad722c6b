use alloc::string::String;

pub type Result<T> = core::result::Result<T, OatError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OatError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("target form does not match loss kind {0}")]
    TargetMismatch(&'static str),

    #[error("non-finite value in {context} (index {index}, value {value})")]
    NonFinite {
        context: &'static str,
        index: usize,
        value: f64,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("OOD sentinel label read as a class index (sample {0})")]
    SentinelLabel(usize),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

impl OatError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OatError::InvalidArgument(msg.into())
    }

    /// Divergence-type failures (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, OatError::NonFinite { .. })
    }
}

/// Fails with [`OatError::NonFinite`] at the first non-finite entry.
pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(OatError::NonFinite {
            context,
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
