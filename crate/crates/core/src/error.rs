use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The operator does not commute with total S^z, so no excitation sector
    /// can carry it. Raised whenever transverse hyperfine fields are present.
    #[error("operator breaks S^z symmetry (max |[H, S_z]| element = {max_commutator:e})")]
    SymmetryViolation { max_commutator: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid spectral exponent {0}")]
    InvalidExponent(f64),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("non-finite amplitude encountered during propagation at t = {t}")]
    NonFinite { t: f64 },

    #[error("entangled output is not positive (min eigenvalue {min_eigenvalue:e})")]
    ChannelInconsistency { min_eigenvalue: f64 },

    #[error("no qualifying peak within t_max = {t_max}")]
    NoPeak { t_max: f64 },

    #[error("Hilbert-space dimension {dim} exceeds the limit of {limit}")]
    MemoryGuard { dim: usize, limit: usize },

    #[error("line {line}: key `{key}`: {msg}")]
    Parse { line: usize, key: String, msg: String },

    #[error("threshold {threshold} not reached on the t_f grid (best objective {best})")]
    NotReachable { threshold: f64, best: f64 },

    #[error("realization {index} failed: {source}")]
    Realization {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
