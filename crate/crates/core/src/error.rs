//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by assembly, recovery and verification.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A numeric or structural parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A density takes a non-positive value somewhere on the grid.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// A sphere chart point lies within the pole guard.
    #[error("point (u={u}, v={v}) lies within {eps:e} rad of a pole")]
    PoleProximity { u: f64, v: f64, eps: f64 },

    /// The requested closed form does not exist for this geometry.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Vector length does not match the operator size.
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Two operators are not defined on the same nodes or bandwidth.
    #[error("node mismatch: {0}")]
    NodeMismatch(String),

    /// Dense assembly requested above the dense size cap.
    #[error(
        "dense operator with {nodes} nodes exceeds the cap of {cap}; use the matrix-free operator"
    )]
    TooLarge { nodes: usize, cap: usize },

    /// Operator entries violate the sign or row-sum structure.
    #[error("malformed operator: {0}")]
    MalformedOperator(String),

    /// The trusted-edge graph is disconnected, so masses cannot be fixed.
    #[error("unrecoverable mass: {reached} of {total} nodes reachable from node 0")]
    UnrecoverableMass { reached: usize, total: usize },

    /// Recovered kernel exceeds one, so the mass vector is wrong.
    #[error("inconsistent kernel: K[{i}][{j}] = {value} exceeds 1")]
    Inconsistency { i: usize, j: usize, value: f64 },

    /// The stencil needs distance entries that are missing or untrusted.
    #[error("insufficient mask at node {node}: {reason}")]
    InsufficientMask { node: usize, reason: String },

    /// Recovered metric is not positive definite.
    #[error("conditioning: metric at node {node} has eigenvalues ({lo:e}, {hi:e})")]
    Conditioning { node: usize, lo: f64, hi: f64 },

    /// An internal invariant was violated.
    #[error("logic error: {0}")]
    Logic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// Malformed binary matrix file.
    #[error("format: {0}")]
    Format(String),

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors that signal a numerically inconsistent operator or
    /// recovery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        if let Error::Scenario { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::MalformedOperator(_)
                | Error::UnrecoverableMass { .. }
                | Error::Inconsistency { .. }
                | Error::InsufficientMask { .. }
                | Error::Conditioning { .. }
                | Error::Logic(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
