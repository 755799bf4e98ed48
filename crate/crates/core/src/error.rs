use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape mismatch, out-of-range value or otherwise malformed input.
    InvalidArgument(String),
    /// A value that must be finite was NaN or infinite.
    NumericDomain(String),
    /// A metric whose denominator is zero.
    UndefinedMetric(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericDomain(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NumericDomain(m) => write!(f, "numeric domain error: {m}"),
            Error::UndefinedMetric(m) => write!(f, "undefined metric: {m}"),
        }
    }
}

impl core::error::Error for Error {}
