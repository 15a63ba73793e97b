//! The θ = 1 tilted chain, its harmonic function and the estimators built on it.
mod estimators;
mod harmonic;
mod kernel;

pub(crate) use estimators::walk;
pub use estimators::{estimate_h, estimate_sigma, mu_tail_estimate, HEstimate, MuTailRow, MuTailTable, SigmaEstimate};
pub use harmonic::{conditioned_expectation, HarmonicPoint, HarmonicSettings, HarmonicTable, McValue};
pub use kernel::{
    path_weight, sample_tilted_path, tilted_step_distribution, total_mass, StepDistribution, TiltedKernel, TiltedPath,
};
