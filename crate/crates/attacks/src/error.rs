use thiserror::Error;
use zcp_core::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid attack input: {0}")]
    Input(String),
    #[error("empty dataset")]
    Empty,
    #[error("adversarial batch violates its constraints: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, AttackError>;
