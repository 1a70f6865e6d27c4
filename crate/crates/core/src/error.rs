use thiserror::Error;

#[derive(Debug, Error)]
pub enum PmcError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("non-finite value in field `{field}` at node {node}")]
    NonFinite { field: String, node: usize },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("exponent p = {p} violates {bound} (n = {n})")]
    ExponentRange { n: usize, p: f64, bound: String },

    #[error("degenerate coefficients: {0}")]
    Degenerate(String),

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("slab quadrature did not converge: {0}")]
    SlabTail(String),

    #[error("graph bound exceeded: ‖v‖_W1,∞ = {norm} > V = {bound}")]
    LipschitzBound { norm: f64, bound: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PmcError>;
