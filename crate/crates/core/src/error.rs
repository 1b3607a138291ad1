use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: ‖M − M†‖_F = {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not unitary: ‖U†U − I‖_F = {defect:e} exceeds {tol:e}")]
    NotUnitary { defect: f64, tol: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid environment chain: {0}")]
    InvalidChain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid time {time} lies outside [0, {horizon}]")]
    GridOutsideHorizon { time: f64, horizon: f64 },

    #[error("time {0} is not a grid point (interpolation is not performed)")]
    NotOnGrid(f64),

    #[error("grid is not uniform: spacing {found:e} differs from {expected:e}")]
    NonUniformGrid { expected: f64, found: f64 },

    #[error("no shock operator configured for transition {from} -> {to}")]
    MissingShock { from: usize, to: usize },

    #[error("integration did not converge under step halving: residual {residual:e}")]
    NonConvergence { residual: f64 },

    #[error("linear solve is numerically singular: condition estimate {condition:e}")]
    Singular { condition: f64 },

    #[error("inverse residual {residual:e} exceeds {tol:e}")]
    InaccurateInverse { residual: f64, tol: f64 },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Configuration,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonConvergence { .. } | Error::Singular { .. } | Error::InaccurateInverse { .. } => {
                ErrorKind::Numerical
            }
            Error::MissingShock { .. } => ErrorKind::Configuration,
            _ => ErrorKind::Validation,
        }
    }
}
