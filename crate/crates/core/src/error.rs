use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("input is not symmetric (max |A - A^T| = {defect:e})")]
    AsymmetricInput { defect: f64 },

    #[error("distance matrix is invalid: {0}")]
    InvalidDistances(String),

    #[error("all pairwise distances are zero; an explicit gamma is required")]
    AllZeroDistances,

    #[error("kernel is not positive semidefinite (smallest eigenvalue {min_eig:e}, largest {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("kernel has zero trace")]
    ZeroTrace,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("kernel weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("kernel weights are all zero")]
    ZeroWeights,

    #[error("non-finite value in input")]
    NonFiniteInput,

    #[error("atom {column} is degenerate (quadratic form {energy:e})")]
    DegenerateAtom { column: usize, energy: f64 },

    #[error("model was trained on a different kernel (fingerprint mismatch)")]
    FingerprintMismatch,

    #[error("trace-ratio denominator vanishes for every candidate basis")]
    SingularDenominator,

    #[error("no nonnegative kernel weights satisfy the normalization constraint")]
    Infeasible,

    #[error("class too small: {0}")]
    ClassTooSmall(String),

    #[error("linear system is singular")]
    SingularSystem,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("graph has no edges usable for spectral clustering")]
    DisconnectedDegenerate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("corrupt model container: {0}")]
    CorruptContainer(String),

    #[error("eigen-decomposition failed: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical routines themselves, as opposed to
    /// malformed or invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateAtom { .. }
                | Error::SingularDenominator
                | Error::Infeasible
                | Error::SingularSystem
                | Error::DisconnectedDegenerate
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
