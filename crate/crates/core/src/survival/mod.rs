//! Survival probabilities: exact iteration and enumeration, direct and tilted
//! Monte Carlo, the band check, and a particle simulator.
mod estimate;
mod exact;
mod population;

pub use estimate::{
    band_from_rows, survival_direct, survival_is, survival_is_detailed, survival_is_enumerated, theorem_band,
    BandReport, BandSettings, IsDiagnostics, Method, SurvivalEstimate,
};
pub use exact::{extinction_iterate, survival_exact_enum, survival_exact_enum_capped, Extinction, Order};
pub use population::{population_survival, simulate_population, simulate_population_fixed, Population, PARTICLE_CAP};
