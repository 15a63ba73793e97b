//! Checks of the survival representation: ψ, the iterated reciprocal
//! identity, Ξ_n with its lower bound, and the conditioned partial sums.
mod fourheadd;
mod identity;
mod sweep;

pub use fourheadd::{fourheadd_partial, FourheaddRow, FourheaddTable};
pub use identity::{psi_bound, psi_eval, repres_identity_check, xi_lowerbound, RepresReport, XiReport, REPRES_N_CAP};
pub use sweep::{proof_sweep, SweepReport, SweepSettings};
