use std::fmt;

/// Error type shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Kernel parameters outside the admissible range.
    KernelParam(String),
    /// Mesh construction parameters outside the admissible range.
    MeshParam(String),
    /// Problem parameters (dimension, exponent, damping weight) rejected.
    ProblemParam(String),
    /// A time was queried that is not a recorded history node.
    TimeNotRecorded(f64),
    /// Embedding exponent outside the admissible Sobolev range.
    EmbeddingRange { r: f64, lo: f64, hi: f64 },
    /// An operation required a nonzero field or a positive integral.
    DegenerateField(String),
    /// A constrained search has an empty feasible set.
    Infeasible(String),
    /// A report was requested for a run that does not support it.
    NotApplicable(String),
    /// An iterative procedure failed to converge.
    NonConvergence(String),
    /// Malformed or inconsistent input.
    InvalidInput(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::KernelParam(m) => write!(f, "kernel parameter error: {m}"),
            Error::MeshParam(m) => write!(f, "mesh parameter error: {m}"),
            Error::ProblemParam(m) => write!(f, "problem parameter error: {m}"),
            Error::TimeNotRecorded(t) => write!(f, "time {t} is not a recorded history node"),
            Error::EmbeddingRange { r, lo, hi } => {
                write!(f, "embedding exponent r = {r} outside [{lo}, {hi}]")
            }
            Error::DegenerateField(m) => write!(f, "degenerate field: {m}"),
            Error::Infeasible(m) => write!(f, "infeasible: {m}"),
            Error::NotApplicable(m) => write!(f, "not applicable: {m}"),
            Error::NonConvergence(m) => write!(f, "no convergence: {m}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
