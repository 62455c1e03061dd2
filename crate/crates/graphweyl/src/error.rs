use thiserror::Error;

use crate::interval_map::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("map validation failed: {}", fmt_violations(.0))]
    InvalidMap(Vec<Violation>),
    #[error("dimension {n} is not a multiple of M0 = {m0}")]
    NotMultipleOfM0 { n: usize, m0: usize },
    #[error("dimension {n} is not a multiple of M0*L0 = {modulus}")]
    BadDimension { n: usize, modulus: usize },
    #[error("odd dimension {0}")]
    OddDimension(usize),
    #[error("matrix is not bistochastic: {0}")]
    NotBistochastic(String),
    #[error("power {ell} exceeds the exact horizon {limit}")]
    PowerBeyondEhrenfest { ell: usize, limit: usize },
    #[error("cutoff r = {r} exceeds the allowed maximum {limit}")]
    CutoffTooLarge { r: usize, limit: usize },
    #[error("bound violated: {0}")]
    BoundViolated(String),
    #[error("multiple paths of length {ell} from {x} to {y}")]
    MultiplePathsFound { x: usize, y: usize, ell: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no block structure found: {0}")]
    NoBlockStructureFound(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("matrix is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("degree too small: {0}")]
    DegreeTooSmall(f64),
    #[error("quadrature failed to converge on [{0}, {1}]")]
    QuadratureFailure(f64, f64),
    #[error("spectral bin is empty")]
    EmptyBin,
    #[error("split window too large: {0}")]
    SplitWindowTooLarge(String),
    #[error("identity violated: {0}")]
    IdentityViolated(String),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-integer trace {trace} for root {j}")]
    NonIntegerTrace { j: usize, trace: f64 },
    #[error("support pattern violated: {0}")]
    PatternViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
