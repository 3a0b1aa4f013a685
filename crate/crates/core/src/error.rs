use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerator degree {numerator} must be below modulus degree {modulus}")]
    NumeratorDegree { numerator: i32, modulus: u32 },

    #[error("polynomial {0:#x} is not irreducible over GF(2)")]
    Reducible(u64),

    #[error("no modulus is tabulated for degree {0} (supported: 1..=32)")]
    UnsupportedDegree(u32),

    #[error("generating vector is malformed: {0}")]
    MalformedVector(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("diffusion coefficient is not positive ({value}) at x = ({x1}, {x2})")]
    NonPositiveCoefficient { value: f64, x1: f64, x2: f64 },

    #[error("conjugate gradients did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("normalization constant {value:e} fell below the floor {floor:e} on level {level}")]
    ZFloor { value: f64, floor: f64, level: usize },

    #[error("level {level} is outside the schedule (finest level {finest})")]
    LevelOutOfRange { level: usize, finest: usize },

    #[error("not enough data points for a slope fit: {0}")]
    InsufficientPoints(usize),

    #[error("missing generating vector file {0} (pass --build-cbc to construct it)")]
    MissingVector(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (solver, normalization floor) as opposed to input problems.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverDiverged { .. } | Error::ZFloor { .. } | Error::NonPositiveCoefficient { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
