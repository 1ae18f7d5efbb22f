use alloc::string::String;
use core::fmt;

/// Errors produced by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A geometric or physical parameter violates its invariant.
    InvalidParameter { name: &'static str, reason: String },
    /// The grid is too coarse for the requested feature.
    UnderResolved(String),
    /// A diffusion tensor is not admissible on an unmasked cell.
    InvalidTensor { cell: usize, reason: &'static str },
    /// Two boundary conditions disagree on the same face or edge pair.
    ConflictingBoundary(&'static str),
    /// An iterative solver stopped before reaching its tolerance.
    NotConverged { iterations: usize, residual: f64, target: f64 },
    /// The solver broke down (zero inner product or non-finite value).
    Breakdown(&'static str),
    /// The explicit drift substep violates the CFL bound.
    CflViolation { dt: f64, limit: f64 },
    /// The obstacle disconnects the periodicity cell.
    BlockedCell(&'static str),
    /// Membrane/bulk fixed-point coupling failed to settle.
    CouplingNotConverged { iterations: usize, history: alloc::vec::Vec<f64> },
    /// An input list was empty or malformed.
    EmptyInput(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::UnderResolved(msg) => write!(f, "grid under-resolved: {msg}"),
            Error::InvalidTensor { cell, reason } => {
                write!(f, "inadmissible diffusion tensor at cell {cell}: {reason}")
            }
            Error::ConflictingBoundary(msg) => write!(f, "conflicting boundary conditions: {msg}"),
            Error::NotConverged { iterations, residual, target } => write!(
                f,
                "linear solver did not converge after {iterations} iterations \
                 (residual {residual:e}, target {target:e})"
            ),
            Error::Breakdown(msg) => write!(f, "solver breakdown: {msg}"),
            Error::CflViolation { dt, limit } => {
                write!(f, "time step {dt:e} exceeds the drift CFL limit {limit:e}")
            }
            Error::BlockedCell(msg) => write!(f, "cell is fully blocked: {msg}"),
            Error::CouplingNotConverged { iterations, history } => write!(
                f,
                "membrane coupling did not converge after {iterations} iterations \
                 (last residual {:e})",
                history.last().copied().unwrap_or(f64::NAN)
            ),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
