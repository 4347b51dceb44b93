//! Crate-wide error type.

use thiserror::Error;

/// Every fallible operation in this crate returns this error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing table `{0}` in case file")]
    MissingTable(&'static str),

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("{kind} row references unknown bus {bus}")]
    DanglingReference { kind: &'static str, bus: u32 },

    #[error("case declares more than one slack bus")]
    MultipleSlack,

    #[error("case declares no slack bus")]
    NoSlack,

    #[error("case graph is not connected")]
    Disconnected,

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("branch {from}-{to} has zero series impedance")]
    ZeroImpedanceBranch { from: u32, to: u32 },

    #[error("cannot reach {target}-bus sub-network: stuck at {reached} buses")]
    CannotReachTarget { target: usize, reached: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Jacobian is singular")]
    SingularJacobian,

    #[error("did not converge within {0} iterations")]
    MaxIterationsExceeded(usize),

    #[error("problem appears infeasible (feasibility residual {feascond:.3e})")]
    Infeasible { feascond: f64 },

    #[error("optimization stalled after {iterations} iterations (feasibility residual {feascond:.3e})")]
    NotConverged { iterations: usize, feascond: f64 },

    #[error("too few labeled samples for `{network}`: {failures} of {requested} oracle calls failed")]
    TooFewLabeled {
        network: String,
        failures: usize,
        requested: usize,
    },

    #[error("scaler has no fitted range for dimension {0}")]
    UnfittedDimension(usize),

    #[error("invalid slot map: {0}")]
    InvalidSlotMap(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty training set for network {0}")]
    EmptyTrainSet(usize),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("missing oracle label for sample {0}")]
    MissingLabel(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
