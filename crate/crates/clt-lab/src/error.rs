//! Error taxonomy shared by every module.
//!
//! Variants map onto the failure classes surfaced by the CLI: bad inputs or
//! parameter combinations ([`Error::Domain`]), a request that would read more
//! binary digits than a float actually carries ([`Error::Precision`]), work
//! that would exceed an enumeration or grid budget ([`Error::Budget`]), and
//! numerical routines that could not reach their target accuracy
//! ([`Error::Numeric`]).

use std::fmt;

/// Library-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid argument or parameter combination.
    Domain(String),
    /// A binary digit of an input was requested beyond the precision its
    /// floating-point representation carries.
    Precision(String),
    /// The requested computation exceeds a configured budget.
    Budget(String),
    /// A numerical routine failed to converge to its target accuracy; the
    /// message reports the accuracy actually achieved.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Precision(msg) => write!(f, "precision error: {msg}"),
            Error::Budget(msg) => write!(f, "budget error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn precision(msg: impl Into<String>) -> Self {
        Error::Precision(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
