use alloc::string::String;

/// Errors raised by the detector and its building blocks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no unmasked samples in {0}")]
    EmptyData(&'static str),
    #[error("complement of the block contains no unmasked samples")]
    EmptyComplement,
    #[error("block {0} lies outside the tensor extents")]
    OutOfBounds(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("generation failed: {0}")]
    Generation(String),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
