use thiserror::Error;

/// Errors raised by the encoding kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PeError {
    #[error("dimension must be at least {min}, got {actual}")]
    DimensionTooSmall { min: usize, actual: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension {0} must be even")]
    OddDimension(usize),

    #[error("dimension {dim} must be divisible by {divisor}")]
    Indivisible { dim: usize, divisor: usize },

    #[error("schedule has {planes} rotation planes, vector needs {needed}")]
    ScheduleMismatch { planes: usize, needed: usize },

    #[error("wavelength must be positive and finite, got {0}")]
    InvalidWavelength(f64),

    #[error("normalizer d must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("position must be finite, got {0}")]
    NonFinitePosition(f64),

    #[error("discrete encoding needs integer positions, got {0}")]
    NonIntegerPosition(f64),

    #[error("frequency must be finite, got {0}")]
    NonFiniteFrequency(f64),

    #[error("imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    ImaginaryLeak { residue: f64, tolerance: f64 },

    #[error("multiplex bank has no components")]
    EmptyBank,

    #[error("zero vector has no normalized correlation")]
    ZeroVector,

    #[error("position arity does not match the encoding: {0}")]
    PositionArity(&'static str),

    #[error("row count mismatch: {0}")]
    RowMismatch(String),

    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidStep(f64),

    #[error("non-finite value encountered during gradient check")]
    NonFinite,

    #[error("no equivariance violation found within {attempts} attempts")]
    Inconclusive { attempts: usize },
}

pub type Result<T> = std::result::Result<T, PeError>;
