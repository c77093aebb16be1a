use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("degenerate batch: train-stats batchnorm needs at least 2 samples, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index {index} out of range 0..{len}")]
    Range { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Dimension(msg.into()))
}
