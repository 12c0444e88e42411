use thiserror::Error;

pub type Result<T> = std::result::Result<T, PolaronError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolaronError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("field is in {found} space, operation requires {required} space")]
    WrongSpace {
        required: &'static str,
        found: &'static str,
    },
    #[error("unsupported norm exponent p = {0}")]
    UnsupportedNorm(f64),
    #[error("potential has imaginary residue {residue:e} (relative to {scale:e})")]
    ImaginaryResidue { residue: f64, scale: f64 },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },
    #[error("spectral gap {gap:e} too small to invert on the orthogonal complement (need > {required:e})")]
    GapTooSmall { gap: f64, required: f64 },
    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    LinearSolveNotConverged { iterations: usize, residual: f64 },
    #[error("no binding: ground-state energy {energy:e} is not negative")]
    NoBinding { energy: f64 },
    #[error("self-consistent iteration stalled: {0}")]
    Stalled(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("krylov exponential failed: {0}")]
    Krylov(String),
}
