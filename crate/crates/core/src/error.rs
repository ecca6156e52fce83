use alloc::string::String;

/// Failure classes surfaced by every fallible operation in the crate.
///
/// The three variants map one-to-one onto the CLI exit codes 2, 3 and 4.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Malformed arguments: dimension mismatches, out-of-range parameters,
    /// unknown subsets.
    #[error("input error: {0}")]
    Input(String),
    /// The data cannot support the requested fit (identical rows, a missing
    /// treatment arm in a fold, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),
    /// A numerical invariant was violated (non-PSD Gram, failed factorization).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! input_err {
    ($($arg:tt)*) => { $crate::error::Error::Input(alloc::format!($($arg)*)) };
}
macro_rules! degenerate_err {
    ($($arg:tt)*) => { $crate::error::Error::Degenerate(alloc::format!($($arg)*)) };
}
macro_rules! numerical_err {
    ($($arg:tt)*) => { $crate::error::Error::Numerical(alloc::format!($($arg)*)) };
}
pub(crate) use degenerate_err;
pub(crate) use input_err;
pub(crate) use numerical_err;
