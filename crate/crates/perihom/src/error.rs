//! Crate-wide error type.

use std::fmt;

/// Everything that can go wrong across the pipeline, from config parsing to
/// iterative solves.
#[derive(Debug)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation, e.g. a
    /// sample point outside the unit cell or a scale that is not 1/n.
    Domain(String),
    /// An invalid run configuration: malformed JSON, values violating the
    /// model assumptions, or geometry that does not align with the grid.
    /// Messages name the offending key where one exists.
    Config(String),
    /// An API precondition the caller must establish was violated, e.g.
    /// mixing fields from incompatible grids. These indicate bugs in calling
    /// code, not bad user input.
    Contract(String),
    /// A requested grid exceeds the compiled size limit.
    Resource(String),
    /// The iterative solver exhausted its budget; carries the iteration
    /// count and the final relative residual.
    Convergence { iterations: usize, residual: f64 },
    /// Underlying I/O failure while reading config or writing outputs.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Resource(msg) => write!(f, "resource limit: {msg}"),
            Error::Convergence { iterations, residual } => write!(
                f,
                "solver did not converge within {iterations} iterations \
                 (final relative residual {residual:.3e})"
            ),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
