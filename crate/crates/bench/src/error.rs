use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad input: malformed table, unknown column, invalid config.
    #[error("{0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Forest(#[from] zcp_forest::ForestError),
    #[error(transparent)]
    Tensor(#[from] zcp_core::TensorError),
    #[error(transparent)]
    Attack(#[from] zcp_attacks::AttackError),
    #[error(transparent)]
    Proxy(#[from] zcp_proxies::ProxyError),
    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    /// Process exit code: 2 for validation errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Validation(_) => 2,
            _ => 3,
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Validation(msg.into())
}

pub type Result<T> = std::result::Result<T, BenchError>;
