use thiserror::Error;

/// Error taxonomy shared by every module.
///
/// `is_validation` distinguishes bad inputs (CLI exit 1) from numerical
/// failures discovered mid-computation (CLI exit 2).
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("{0}")]
    InvalidParameter(String),

    /// A map or field was queried where it is not defined.
    #[error("map undefined at x = {0}")]
    Domain(f64),

    /// The sign feedback field has no value on the gap |y| <= t (y != 0).
    #[error("field undefined inside the band |y| <= t at (t = {t}, y = {y})")]
    UndefinedBand { t: f64, y: f64 },

    /// Operation not available for this parameter regime.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// Vector arguments that must agree in length do not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// A guaranteed mathematical property failed to hold numerically.
    #[error("internal consistency: {0}")]
    Inconsistency(String),
}

impl Error {
    /// True for errors that indicate bad inputs rather than numerical failure.
    /// Asking for an operation outside its parameter regime counts as a bad
    /// input: the request was wrong, not the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::LengthMismatch(_) | Error::UnsupportedRegime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
