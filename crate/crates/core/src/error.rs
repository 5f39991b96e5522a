//! Error type shared by every module of the lab.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("OUT_OF_DOMAIN: t = {t} is not in the curve domain ({reason})")]
    OutOfDomain { t: f64, reason: String },

    #[error("UNSUPPORTED_CURVE: symbolic check needs the identity symbol curve")]
    UnsupportedCurve,

    /// Low-order coefficients of `z^n + sum z^l P_l(z)` that block division by `z^(n-1)`.
    #[error("NOT_DIVISIBLE: coefficients at degrees {degrees:?} do not vanish")]
    NotDivisible { degrees: Vec<usize> },

    #[error("DIM_MISMATCH: {0}")]
    DimMismatch(String),

    #[error("GRID_TOO_COARSE: {points} points, need at least {min}")]
    GridTooCoarse { points: usize, min: usize },

    #[error("OUT_OF_OMEGA: Re(lambda) = {re} must be below c - b/2 = {bound}")]
    OutOfOmega { re: f64, bound: f64 },

    #[error("INDEX_OUT_OF_RANGE: operator A_{index} requested for order {order}")]
    IndexOutOfRange { index: usize, order: usize },

    #[error("EMPTY_SAMPLES: at least one sample time is required")]
    EmptySamples,

    #[error("NONFINITE_STATE: state became non-finite at step {step}")]
    NonfiniteState { step: usize },

    #[error("UNKNOWN_FORM: trajectory generated by a {0} matrix carries no derivative layout")]
    UnknownForm(String),

    #[error("NOT_DIAGONALIZABLE: eigenvector condition number {condition:e} exceeds 1e8")]
    NotDiagonalizable { condition: f64 },

    #[error("LAMBDA_IN_SPECTRUM: smallest singular value of (lambda - A) is {sigma_min:e}")]
    LambdaInSpectrum { sigma_min: f64 },

    #[error("MISSING_COMPONENT: derivative u^({component}) not available (order {order})")]
    MissingComponent { component: usize, order: usize },

    #[error("LENGTH_MISMATCH: expected {expected} weights, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("INVALID_INPUT: {0}")]
    InvalidInput(String),

    #[error("NO_CONVERGENCE: {0}")]
    NoConvergence(String),
}

impl LabError {
    /// Stable machine-readable code, the prefix of the display form.
    pub fn code(&self) -> &'static str {
        match self {
            LabError::OutOfDomain { .. } => "OUT_OF_DOMAIN",
            LabError::UnsupportedCurve => "UNSUPPORTED_CURVE",
            LabError::NotDivisible { .. } => "NOT_DIVISIBLE",
            LabError::DimMismatch(_) => "DIM_MISMATCH",
            LabError::GridTooCoarse { .. } => "GRID_TOO_COARSE",
            LabError::OutOfOmega { .. } => "OUT_OF_OMEGA",
            LabError::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            LabError::EmptySamples => "EMPTY_SAMPLES",
            LabError::NonfiniteState { .. } => "NONFINITE_STATE",
            LabError::UnknownForm(_) => "UNKNOWN_FORM",
            LabError::NotDiagonalizable { .. } => "NOT_DIAGONALIZABLE",
            LabError::LambdaInSpectrum { .. } => "LAMBDA_IN_SPECTRUM",
            LabError::MissingComponent { .. } => "MISSING_COMPONENT",
            LabError::LengthMismatch { .. } => "LENGTH_MISMATCH",
            LabError::InvalidInput(_) => "INVALID_INPUT",
            LabError::NoConvergence(_) => "NO_CONVERGENCE",
        }
    }
}
