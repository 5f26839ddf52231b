use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout mismatch: {0}")]
    Layout(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("solver blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },
    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u16, supported: u16 },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
