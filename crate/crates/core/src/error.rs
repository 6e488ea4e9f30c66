use alloc::string::String;
use core::fmt;

/// Crate-wide error type.
///
/// Variants map onto the failure categories surfaced by the CLI exit
/// codes: configuration/usage problems, data problems, and numerical
/// failures.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or request (unknown outcome, bad window, ...).
    Config(String),
    /// Malformed or inconsistent input data (schema mismatch, unresolvable ids).
    Data(String),
    /// Numerical failure (rank deficiency, non-convergence, no variation).
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
