use core::fmt;

/// Failure modes of the per-bin numerics.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Cholesky pivot `pivot` was not strictly positive.
    NotPositiveDefinite { pivot: usize },
    /// The tridiagonal QL iteration exceeded its sweep budget for eigenvalue `index`.
    ConvergenceFailure { index: usize },
    DimensionMismatch { expected: usize, found: usize },
    NotSquare { rows: usize, cols: usize },
    /// The SC normalizer `e_1^T R_y e_col` vanished (speech absent, or the
    /// RTF entry of that external microphone is ~0).
    NearZeroNormalizer { column: usize, magnitude: f64 },
    ZeroSnr { index: usize },
    AllZeroSnr,
    /// Combination weights do not sum to one.
    ConstraintViolation { sum_re: f64, sum_im: f64 },
    /// Covariances do not follow the rank-1 speech / uncorrelated external
    /// noise model; `deviation` is the relative misfit of `h^H Rn^-1 E`.
    ModelViolation { deviation: f64 },
    NonpositiveInput,
    NoActiveFrames,
    ZeroNoisePower,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite (pivot {pivot})")
            }
            Error::ConvergenceFailure { index } => {
                write!(f, "eigenvalue iteration did not converge (eigenvalue {index})")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, not square"),
            Error::NearZeroNormalizer { column, magnitude } => write!(
                f,
                "SC normalizer for column {column} is near zero ({magnitude:e})"
            ),
            Error::ZeroSnr { index } => write!(f, "input SNR of external microphone {index} is zero"),
            Error::AllZeroSnr => f.write_str("all external input SNRs are zero"),
            Error::ConstraintViolation { sum_re, sum_im } => write!(
                f,
                "weights sum to {sum_re}{sum_im:+}j instead of 1"
            ),
            Error::ModelViolation { deviation } => write!(
                f,
                "covariances violate the rank-1/uncorrelated-external-noise model (misfit {deviation:e})"
            ),
            Error::NonpositiveInput => f.write_str("input must be strictly positive"),
            Error::NoActiveFrames => f.write_str("no speech-active frames"),
            Error::ZeroNoisePower => f.write_str("beamformer output noise power is zero"),
        }
    }
}

impl core::error::Error for Error {}
