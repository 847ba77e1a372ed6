use thiserror::Error;

/// Failure modes surfaced by the library. Configuration errors come from
/// invalid problem descriptions, assembly errors from inconsistent system
/// construction, numerical errors from factorization or solve breakdowns,
/// and ordering errors from sequence fields that violate their invariants.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("assembly: {0}")]
    Assembly(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("ordering: {0}")]
    Ordering(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn assembly(msg: impl Into<String>) -> Self {
        Error::Assembly(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn ordering(msg: impl Into<String>) -> Self {
        Error::Ordering(msg.into())
    }
}
