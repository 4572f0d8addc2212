use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("axis is not normalized: |n| = {norm}")]
    Normalization { norm: f64 },

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("time {t} outside [0, {total}]")]
    Domain { t: f64, total: f64 },

    #[error("invalid pulse specification: {0}")]
    InvalidSpec(String),

    #[error("invalid noise spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("spectrum is not integrable: {0}")]
    DivergentSpectrum(String),

    #[error("suppression-order fit failed: {0}")]
    Fit(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("grid refinement disagreement: {0}")]
    Refinement(String),

    #[error("time step too coarse: {0}")]
    StepSize(String),

    #[error("invalid ensemble configuration: {0}")]
    Ensemble(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of numerical validity rather than of the input description.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Fit(_) | Error::Quadrature(_) | Error::Refinement(_) | Error::StepSize(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
