use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("degenerate sample: zero variance")]
    DegenerateSample,
    #[error("sample too small: need at least {need} values, got {got}")]
    SampleSize { need: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate constraint: {0}")]
    DegenerateConstraint(String),
    #[error("sampled structure has no active voxels")]
    EmptyStructure,
    #[error("non-finite velocity at sampling step {step}")]
    Sampling { step: usize },
    #[error("non-finite loss at optimization step {step}")]
    Optimization { step: usize },
    #[error("training diverged at step {step}")]
    Training { step: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
