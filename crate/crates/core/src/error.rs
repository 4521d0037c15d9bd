use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("system too large for exact enumeration: n = {n}, cap = {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("too few distinct energies: {0}")]
    TooFewStates(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("preprocessing order violated: {0}")]
    Preprocessing(&'static str),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got, context });
    }
    Ok(())
}
