use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::matrix::Matrix;

/// One mass point of a finite offspring table: a vector of children counts by
/// type and its probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub counts: Vec<u32>,
    pub prob: f64,
}

/// Offspring distribution of a single parent type.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringLaw {
    /// Independent Poisson counts per child type with the given means.
    PoissonProduct { means: Vec<f64> },
    /// An explicit probability table on ℕ₀^p.
    FiniteTable { support: Vec<TableEntry> },
}

impl OffspringLaw {
    pub fn poisson(means: Vec<f64>) -> Self {
        OffspringLaw::PoissonProduct { means }
    }

    pub fn table(entries: Vec<(Vec<u32>, f64)>) -> Self {
        OffspringLaw::FiniteTable {
            support: entries
                .into_iter()
                .map(|(counts, prob)| TableEntry { counts, prob })
                .collect(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            OffspringLaw::PoissonProduct { .. } => "poisson-product",
            OffspringLaw::FiniteTable { .. } => "finite-table",
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            OffspringLaw::PoissonProduct { means } => {
                if means.len() != p {
                    return Err(LabError::InvalidModel(format!(
                        "poisson mean row has length {}, expected {p}",
                        means.len()
                    )));
                }
                if means.iter().any(|m| !m.is_finite() || *m < 0.0) {
                    return Err(LabError::InvalidModel(format!(
                        "poisson means must be finite and nonnegative: {means:?}"
                    )));
                }
            }
            OffspringLaw::FiniteTable { support } => {
                if support.is_empty() {
                    return Err(LabError::InvalidModel("empty offspring table".into()));
                }
                let mut total = 0.0;
                for e in support {
                    if e.counts.len() != p {
                        return Err(LabError::InvalidModel(format!(
                            "table entry {:?} has length {}, expected {p}",
                            e.counts,
                            e.counts.len()
                        )));
                    }
                    if !(e.prob >= 0.0) || !e.prob.is_finite() {
                        return Err(LabError::InvalidModel(format!(
                            "table mass {} is not a probability",
                            e.prob
                        )));
                    }
                    total += e.prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(LabError::InvalidModel(format!("table masses sum to {total}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Generating function at `s` without range checks. The closed forms are
    /// entire functions, so this also serves finite differences across s = 1.
    pub fn pgf(&self, s: &[f64]) -> f64 {
        match self {
            OffspringLaw::PoissonProduct { means } => {
                let x: f64 = means.iter().zip(s).map(|(m, sj)| m * (sj - 1.0)).sum();
                x.exp()
            }
            OffspringLaw::FiniteTable { support } => support
                .iter()
                .map(|e| {
                    e.prob
                        * e.counts
                            .iter()
                            .zip(s)
                            .map(|(&z, sj)| sj.powi(z as i32))
                            .product::<f64>()
                })
                .sum(),
        }
    }

    /// `1 − f(1 − v)` evaluated without cancellation.
    pub fn complement(&self, v: &[f64]) -> f64 {
        match self {
            OffspringLaw::PoissonProduct { means } => {
                let x: f64 = means.iter().zip(v).map(|(m, vj)| m * vj).sum();
                -(-x).exp_m1()
            }
            OffspringLaw::FiniteTable { support } => {
                let mut acc = 0.0;
                for e in support {
                    let mut log_keep = 0.0;
                    for (&z, vj) in e.counts.iter().zip(v) {
                        if z > 0 {
                            log_keep += z as f64 * (-vj).ln_1p();
                        }
                    }
                    acc += e.prob * -log_keep.exp_m1();
                }
                acc.clamp(0.0, 1.0)
            }
        }
    }

    /// Expected children per type.
    pub fn mean_row(&self, p: usize) -> Vec<f64> {
        match self {
            OffspringLaw::PoissonProduct { means } => means.clone(),
            OffspringLaw::FiniteTable { support } => {
                let mut row = vec![0.0; p];
                for e in support {
                    for (r, &z) in row.iter_mut().zip(&e.counts) {
                        *r += e.prob * z as f64;
                    }
                }
                row
            }
        }
    }

    /// Second factorial moments: the Hessian of the generating function at 1.
    pub fn hessian(&self, p: usize) -> Matrix {
        let mut h = Matrix::zeros(p);
        match self {
            OffspringLaw::PoissonProduct { means } => {
                for k in 0..p {
                    for l in 0..p {
                        h[(k, l)] = means[k] * means[l];
                    }
                }
            }
            OffspringLaw::FiniteTable { support } => {
                for e in support {
                    for k in 0..p {
                        for l in 0..p {
                            let zk = e.counts[k] as f64;
                            let zl = e.counts[l] as f64;
                            let fact = if k == l { zk * (zl - 1.0) } else { zk * zl };
                            h[(k, l)] += e.prob * fact;
                        }
                    }
                }
            }
        }
        h
    }
}
