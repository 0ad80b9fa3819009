use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("layout mismatch: expected {expected} values, got {found}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("range [{start}, {end}) out of bounds for length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("non-finite value in segment `{segment}`")]
    NonFinite { segment: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for faults caused by NaN/Inf rather than bad arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
