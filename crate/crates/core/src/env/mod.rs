//! Offspring laws, environment realizations and the i.i.d. environment model.

mod conditions;
mod law;
mod model;
mod point;

pub use conditions::{
    check_conditions, check_conditions_with, ConditionsReport, H1Report, H2Report, H3Report, H4Report, DRIFT_TOL,
};
pub use law::{OffspringLaw, TableEntry};
pub use model::{EnvModel, ModelSpec, Scenario, ScenarioSpec};
pub use point::{EnvPoint, PointMoments};
