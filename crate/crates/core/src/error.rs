use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HippoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular system: {context} (condition number {condition:.3e})")]
    Singular { context: String, condition: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("non-convergence: {0}")]
    NonConvergence(String),

    #[error("index {index} is not in the selected support")]
    NotInSupport { index: usize },
}

pub type Result<T> = std::result::Result<T, HippoError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HippoError::Dimension {
            what,
            expected,
            got,
        })
    }
}
