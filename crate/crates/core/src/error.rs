use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical kernels and scenario builders.
#[derive(Debug, Error)]
pub enum HomLieError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("matrix contains non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("matrix exponential overflowed (1-norm of argument {norm:e})")]
    ExpmOverflow { norm: f64 },

    #[error("flow overflow at t = {t}: state norm {norm:e} exceeds {limit:e}")]
    FlowOverflow { t: f64, norm: f64, limit: f64 },

    #[error("Schur iteration did not converge for a {dim}x{dim} operator within {max_iterations} iterations")]
    EigNoConvergence { dim: usize, max_iterations: usize },

    #[error(
        "operator is not diagonalizable: eigenvalue cluster at {cluster} \
         (multiplicity {multiplicity}, smallest eigenvector singular value {min_singular:e}, \
         reconstruction residual {residual:e})"
    )]
    Defective {
        cluster: Complex64,
        multiplicity: usize,
        min_singular: f64,
        residual: f64,
    },

    #[error("matrix is not unitary: |U*U - I| = {deviation:e}")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not hermitian: |H - H*| = {deviation:e}")]
    NotHermitian { deviation: f64 },

    #[error("twist kind {kind} is not an isometry")]
    NotIsometric { kind: &'static str },

    #[error("weight {index} has modulus {modulus}, expected 1")]
    NonUnimodularWeight { index: usize, modulus: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HomLieError> = std::result::Result<T, E>;
