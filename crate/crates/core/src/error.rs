use thiserror::Error;

/// Errors raised by the library. Each variant names the failure class so
/// callers (and the CLI) can map them to exit codes and report tags.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty domain: {0}")]
    EmptyDomain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported modulus {q}: {reason}")]
    UnsupportedModulus { q: u64, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("not annihilable: {0}")]
    NotAnnihilable(String),
    #[error("not combinable at m = {m}: {reason}")]
    NotCombinable { m: u64, reason: String },
    #[error("search exhausted: {0}")]
    Exhausted(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<LabError> },
}

impl LabError {
    /// Tag an error with the pipeline stage that raised it.
    pub fn at_stage(stage: &str) -> impl Fn(LabError) -> LabError + '_ {
        move |e| LabError::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Parse(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(LabError::DimMismatch { expected, got })
    }
}
