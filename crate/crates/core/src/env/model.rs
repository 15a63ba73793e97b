use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::law::{OffspringLaw, TableEntry};
use crate::env::point::EnvPoint;
use crate::error::{LabError, Result};

/// A scenario of the environment law: a weight and its realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub weight: f64,
    pub point: EnvPoint,
}

/// The i.i.d. environment law as a finite mixture of environment points.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvModel {
    scenarios: Vec<Scenario>,
    declared_delta: f64,
    cumulative: Vec<f64>,
}

impl EnvModel {
    /// Builds a model and enforces the declared entry-ratio bound on every
    /// scenario.
    pub fn new(scenarios: Vec<(f64, EnvPoint)>, declared_delta: f64) -> Result<Self> {
        let model = Self::new_unchecked(scenarios, declared_delta)?;
        for (k, sc) in model.scenarios.iter().enumerate() {
            let ratio = sc.point.entry_ratio();
            if !(ratio <= declared_delta) {
                return Err(LabError::DeltaExceeded {
                    scenario: k,
                    ratio,
                    declared: declared_delta,
                });
            }
        }
        Ok(model)
    }

    /// Builds a model checking only its structure (weights, dimensions and a
    /// nonzero mean matrix per scenario). The entry-ratio bound is left to
    /// [`crate::env::check_conditions`], which reports it instead of failing.
    pub fn new_unchecked(scenarios: Vec<(f64, EnvPoint)>, declared_delta: f64) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(LabError::InvalidModel("a model needs at least one scenario".into()));
        }
        if !(declared_delta > 1.0) || !declared_delta.is_finite() {
            return Err(LabError::InvalidModel(format!(
                "declared delta must be a finite number > 1, got {declared_delta}"
            )));
        }
        let p = scenarios[0].1.dim();
        let mut total = 0.0;
        for (k, (w, pt)) in scenarios.iter().enumerate() {
            if !(*w > 0.0 && *w <= 1.0) {
                return Err(LabError::InvalidModel(format!(
                    "scenario {k} weight {w} is not in (0,1]"
                )));
            }
            if pt.dim() != p {
                return Err(LabError::InvalidModel(format!(
                    "scenario {k} has p = {}, expected {p}",
                    pt.dim()
                )));
            }
            if pt.mean().norm() == 0.0 {
                return Err(LabError::Degenerate(format!("scenario {k} has a zero mean matrix")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidModel(format!("weights sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = scenarios
            .iter()
            .map(|(w, _)| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            scenarios: scenarios
                .into_iter()
                .map(|(weight, point)| Scenario { weight, point })
                .collect(),
            declared_delta,
            cumulative,
        })
    }

    /// Single-type Poisson model with the given (weight, mean) pairs.
    pub fn scalar_poisson(pairs: &[(f64, f64)], declared_delta: f64) -> Result<Self> {
        let scenarios = pairs
            .iter()
            .map(|&(w, m)| Ok((w, EnvPoint::poisson(&[vec![m]])?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(scenarios, declared_delta)
    }

    pub fn dim(&self) -> usize {
        self.scenarios[0].point.dim()
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn point(&self, k: usize) -> &EnvPoint {
        &self.scenarios[k].point
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.scenarios[k].weight
    }

    pub fn declared_delta(&self) -> f64 {
        self.declared_delta
    }

    /// Largest entry ratio over scenarios (Δ*).
    pub fn max_entry_ratio(&self) -> f64 {
        self.scenarios.iter().map(|s| s.point.entry_ratio()).fold(1.0, f64::max)
    }

    pub fn all_poisson(&self) -> bool {
        self.scenarios.iter().all(|s| s.point.is_poisson())
    }

    /// Draws a scenario index with probability equal to its weight.
    pub fn sample_scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.scenarios.len() - 1)
    }

    /// Multiplies all Poisson means by `c`; entry ratios are unchanged.
    pub fn scale_means(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(LabError::Domain(format!("scale factor must be positive, got {c}")));
        }
        let mut scenarios = Vec::with_capacity(self.len());
        for (k, sc) in self.scenarios.iter().enumerate() {
            let point = sc
                .point
                .scaled_means(c)
                .ok_or(LabError::UnsupportedFamily { scenario: k })?;
            scenarios.push((sc.weight, point));
        }
        let mut out = Self::new_unchecked(scenarios, self.declared_delta)?;
        out.cumulative = self.cumulative.clone();
        Ok(out)
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        Self::new(spec.points()?, spec.declared_delta)
    }

    /// Fails for scenarios that mix offspring families across types, which
    /// the config schema cannot express.
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let scenarios = self
            .scenarios
            .iter()
            .enumerate()
            .map(|(k, sc)| {
                ScenarioSpec::from_point(sc.weight, &sc.point)
                    .ok_or_else(|| LabError::InvalidModel(format!("scenario {k} mixes offspring families")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelSpec {
            declared_delta: self.declared_delta,
            scenarios,
        })
    }
}

/// Serializable description of an [`EnvModel`], as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub declared_delta: f64,
    pub scenarios: Vec<ScenarioSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// `means[i][j]` is the expected number of type-j children of a type-i parent.
    PoissonProduct { weight: f64, means: Vec<Vec<f64>> },
    /// `tables[i]` is the offspring table of a type-i parent.
    FiniteTable { weight: f64, tables: Vec<Vec<TableEntry>> },
}

impl ScenarioSpec {
    fn from_point(weight: f64, point: &EnvPoint) -> Option<Self> {
        if point.is_poisson() {
            return Some(ScenarioSpec::PoissonProduct {
                weight,
                means: point.mean().rows(),
            });
        }
        let tables = point
            .laws()
            .iter()
            .map(|law| match law {
                OffspringLaw::FiniteTable { support } => Some(support.clone()),
                OffspringLaw::PoissonProduct { .. } => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(ScenarioSpec::FiniteTable { weight, tables })
    }

    pub fn weight(&self) -> f64 {
        match self {
            ScenarioSpec::PoissonProduct { weight, .. } | ScenarioSpec::FiniteTable { weight, .. } => *weight,
        }
    }

    pub fn to_point(&self) -> Result<EnvPoint> {
        match self {
            ScenarioSpec::PoissonProduct { means, .. } => EnvPoint::poisson(means),
            ScenarioSpec::FiniteTable { tables, .. } => EnvPoint::new(
                tables
                    .iter()
                    .map(|t| OffspringLaw::FiniteTable { support: t.clone() })
                    .collect(),
            ),
        }
    }
}

impl ModelSpec {
    pub fn points(&self) -> Result<Vec<(f64, EnvPoint)>> {
        self.scenarios.iter().map(|s| Ok((s.weight(), s.to_point()?))).collect()
    }

    /// Builds the model without enforcing the entry-ratio bound.
    pub fn build_unchecked(&self) -> Result<EnvModel> {
        EnvModel::new_unchecked(self.points()?, self.declared_delta)
    }
}
