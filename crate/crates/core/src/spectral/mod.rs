//! Transfer operators, their eigen data, and the moment Lyapunov function.

mod grid;
mod lyapunov;
mod subadditive;
mod transfer;

pub use grid::{DirectionGrid, Stencil};
pub use lyapunov::{calibrate, lyapunov_curve, CalibrationReport, LambdaEvaluator, LyapunovCurve, SpectralSettings};
pub(crate) use subadditive::check_cap;
pub use subadditive::{
    lambda_subadditive, lambda_subadditive_capped, SubadditiveEstimate, SubadditiveMode, ENUMERATION_CAP,
};
pub use transfer::{
    apply_transfer, solve_eigen, spectral_radius, EigenSettings, SpectralSolution, TransferGeometry, TransferOperator,
};
