use thiserror::Error;

use crate::topology::TopologyError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("chain must have at least one line")]
    EmptyChain,
    #[error("eigenvalue index {k} out of range 1..={n}")]
    IndexOutOfRange { k: usize, n: usize },
    #[error("droop slope is zero: the bus has no controller")]
    ZeroSlope,
    #[error("empty box [{lo}, {hi}]")]
    EmptyBox { lo: f64, hi: f64 },
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("closed-form solve requires quadratic costs without box constraints")]
    NotUnconstrained,
    #[error("matrix is not positive definite: {0}")]
    SingularSystem(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("voltage collapse at node {node}")]
    VoltageCollapse { node: usize },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
