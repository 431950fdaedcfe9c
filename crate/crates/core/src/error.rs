use thiserror::Error;

/// Errors surfaced by the calculus engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point is outside the domain: {0}")]
    Domain(String),

    #[error("structure not supported: {0}")]
    Unsupported(String),

    #[error("solver failure: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("oracle returned an invalid value: {0}")]
    Oracle(String),

    #[error("undefined extended-real operation: {0}")]
    ExtReal(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
