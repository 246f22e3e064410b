use thiserror::Error;

/// Errors raised by the measure algebra and everything built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value outside the mathematical domain of an operation
    /// (nonpositive atom position, negative scale, zero exponent, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or spaces do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// Invalid policy or settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// A measure grew past the atom cap.
    #[error("atom count {count} exceeds cap {cap}")]
    AtomOverflow { count: usize, cap: usize },

    /// A configuration enumeration cannot certify the requested Poisson mass.
    #[error("truncation insufficient: omitted Poisson mass {tail:e} exceeds allowed {allowed:e} at cap {cap}")]
    Truncation { tail: f64, allowed: f64, cap: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn structural<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Structural(msg.into()))
}
