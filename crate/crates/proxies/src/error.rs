use thiserror::Error;
use zcp_core::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxyError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("correlation undefined: jacobian row {0} has zero variance")]
    ZeroVariance(usize),
    #[error("no class has at least two samples")]
    NoUsableClass,
    #[error("output is constant in the input (delta = 0)")]
    ZeroDelta,
    #[error("{0} produced a non-finite score")]
    NonFinite(&'static str),
    #[error("invalid batch: {0}")]
    Batch(String),
}

pub type Result<T> = std::result::Result<T, ProxyError>;

pub(crate) fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ProxyError::NonFinite(name))
    }
}
