use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {layer}: {detail}")]
    Shape { layer: String, detail: String },
    #[error("backward called on {layer} before forward")]
    NoForwardCache { layer: String },
    #[error("non-finite gradient in parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("optimizer state holds {expected} parameters, got {got}")]
    StateMismatch { expected: usize, got: usize },
    #[error("bad model blob: {0}")]
    Blob(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for NnError {
    fn from(e: std::io::Error) -> Self {
        NnError::Io(e.to_string())
    }
}

pub(crate) fn shape_err(layer: &str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        layer: layer.to_string(),
        detail: detail.into(),
    }
}
