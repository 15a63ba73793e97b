use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("scenario {scenario} has entry ratio {ratio} above the declared bound {declared}")]
    DeltaExceeded { scenario: usize, ratio: f64, declared: f64 },

    #[error("operation requires poisson-product laws; scenario {scenario} uses another family")]
    UnsupportedFamily { scenario: usize },

    #[error("grid solver supports p in 1..=3, got p = {0}")]
    UnsupportedDimension(usize),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("enumeration of {needed} sequences exceeds the cap of {cap}")]
    Budget { needed: u128, cap: u128 },

    #[error("population exceeded {cap} particles at generation {generation}")]
    PopulationCap {
        cap: u64,
        generation: usize,
        partial: Vec<Vec<u64>>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
