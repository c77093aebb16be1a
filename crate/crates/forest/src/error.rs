use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForestError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("target column {0} is constant; R² is undefined")]
    ConstantTarget(usize),
    #[error("all values tied; rank correlation is undefined")]
    AllTied,
    #[error("feature schema differs from the one the forest was trained on")]
    Schema,
    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ForestError>;
