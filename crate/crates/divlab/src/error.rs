//! Crate-wide error type.

use std::fmt;

/// Errors reported by the numerical engines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation (non-positive rate, unknown field, ...).
    InvalidParameter(String),
    /// A tilted moment E(Y^k e^{sY}) was requested at or beyond the MGF radius.
    DivergentTilt {
        tilt: f64,
        radius: f64,
        /// Extra context, e.g. the minimal admissible tilt scale N.
        detail: String,
    },
    /// The claim family cannot be handled by the requested closed-form path.
    Unsupported(String),
    /// An iterative solve failed to reach tolerance; carries diagnostics.
    Convergence(String),
    /// A piecewise function was evaluated inside a gap between segments.
    Structural(String),
    /// A barrier with non-positive marginal value g_n'(b).
    InvalidBarrier { b: f64, slope: f64 },
    /// Band search ran out of room below `x_max`.
    IncompleteBand { x_max: f64, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DivergentTilt { tilt, radius, detail } => write!(
                f,
                "tilted moment diverges: tilt {tilt} >= mgf radius {radius} ({detail})"
            ),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Convergence(msg) => write!(f, "convergence failure: {msg}"),
            Error::Structural(msg) => write!(f, "structural error: {msg}"),
            Error::InvalidBarrier { b, slope } => {
                write!(f, "invalid barrier b = {b}: g_n'(b) = {slope} <= 0")
            }
            Error::IncompleteBand { x_max, detail } => {
                write!(f, "band construction incomplete below x_max = {x_max}: {detail}; retry with a larger x_max")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
