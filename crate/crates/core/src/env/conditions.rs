use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{LabError, Result};
use crate::matrix::l1;
use crate::rng::Streams;
use crate::spectral::{DirectionGrid, LambdaEvaluator, SpectralSettings};

/// Tolerance on |Λ′(1)| for the critical-drift hypothesis.
pub const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Report {
    pub pass: bool,
    /// Θ for finite-state models.
    pub theta_set: String,
    pub probes: Vec<f64>,
    /// Λ(θ) at each probe, when the grid solver applies.
    pub log_lambda: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub pass: bool,
    /// max over scenarios of the entry ratio (infinite with a zero entry).
    pub delta_star: f64,
    pub declared_delta: f64,
    pub all_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H3Report {
    pub pass: bool,
    pub delta: f64,
    /// min over tested directions of P(log|Mx| > δ).
    pub min_probability: f64,
    /// min over tested directions of max_k log|M_k x|; H3 holds for any δ below it.
    pub delta_sup: f64,
    pub directions_tested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Report {
    pub pass: bool,
    pub epsilon: f64,
    /// E[|M| |log 𝓣|^{1+ε}], infinite when some 𝓣 = 0.
    pub moment: f64,
    pub min_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub h1: H1Report,
    pub h2: H2Report,
    pub h3: H3Report,
    pub h4: H4Report,
    pub d_lambda_0: Option<f64>,
    pub d_lambda_1: Option<f64>,
    /// Λ′(0) < 0 and |Λ′(1)| ≤ [`DRIFT_TOL`].
    pub theorem_hypotheses: bool,
    pub notes: Vec<String>,
}

impl ConditionsReport {
    /// H1 through H4 all pass.
    pub fn pass(&self) -> bool {
        self.h1.pass && self.h2.pass && self.h3.pass && self.h4.pass
    }
}

/// Checks H1–H4 and the Λ′ hypotheses with default spectral settings.
pub fn check_conditions(
    model: &EnvModel,
    theta_probes: &[f64],
    delta: f64,
    budget: usize,
    seed: u64,
) -> Result<ConditionsReport> {
    check_conditions_with(model, theta_probes, delta, budget, seed, SpectralSettings::default())
}

fn h3_grid(p: usize) -> Option<DirectionGrid> {
    match p {
        1 => DirectionGrid::new(1, 0).ok(),
        2 => DirectionGrid::new(2, 200).ok(),
        3 => DirectionGrid::new(3, 40).ok(),
        _ => None,
    }
}

pub fn check_conditions_with(
    model: &EnvModel,
    theta_probes: &[f64],
    delta: f64,
    budget: usize,
    seed: u64,
    settings: SpectralSettings,
) -> Result<ConditionsReport> {
    if !(delta > 0.0) {
        return Err(LabError::Domain(format!("H3 needs δ > 0, got {delta}")));
    }
    let mut notes = Vec::new();
    let p = model.dim();

    let all_positive = model.scenarios().iter().all(|s| s.point.mean().all_positive());
    let delta_star = model.max_entry_ratio();
    let h2 = H2Report {
        pass: all_positive && delta_star <= model.declared_delta(),
        delta_star,
        declared_delta: model.declared_delta(),
        all_positive,
    };
    if !all_positive {
        notes.push("H2: a mean matrix has a zero entry".into());
    }

    let mut directions: Vec<Vec<f64>> = h3_grid(p).map(|g| g.nodes().to_vec()).unwrap_or_default();
    let mut rng = Streams::new(seed, "conditions").batch(0);
    for _ in 0..budget {
        let x: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let n = l1(&x);
        directions.push(x.into_iter().map(|v| v / n).collect());
    }
    let mut min_prob = f64::INFINITY;
    let mut delta_sup = f64::INFINITY;
    for x in &directions {
        let mut prob = 0.0;
        let mut best = f64::NEG_INFINITY;
        for sc in model.scenarios() {
            let g = l1(&sc.point.mean().mul_vec(x)).ln();
            if g > delta {
                prob += sc.weight;
            }
            best = best.max(g);
        }
        min_prob = min_prob.min(prob);
        delta_sup = delta_sup.min(best);
    }
    let h3 = H3Report {
        pass: min_prob > 0.0,
        delta,
        min_probability: min_prob,
        delta_sup,
        directions_tested: directions.len(),
    };

    let mut moment = 0.0;
    let mut min_t = f64::INFINITY;
    for sc in model.scenarios() {
        let t = sc.point.t();
        min_t = min_t.min(t);
        moment += sc.weight * sc.point.mean().norm() * t.ln().abs().powi(2);
    }
    let h4_pass = min_t > 0.0 && moment.is_finite();
    if !h4_pass {
        notes.push("H4: some scenario has 𝓣 = 0, log 𝓣 diverges".into());
    }
    let h4 = H4Report {
        pass: h4_pass,
        epsilon: 1.0,
        moment: if h4_pass { moment } else { f64::INFINITY },
        min_t,
    };

    let evaluator = match LambdaEvaluator::new(model, settings) {
        Ok(e) => Some(e),
        Err(e) => {
            notes.push(format!("spectral quantities unavailable: {e}"));
            None
        }
    };
    let mut log_lambda = Vec::with_capacity(theta_probes.len());
    let mut h1_pass = true;
    for &theta in theta_probes {
        if !(theta > 0.0) {
            return Err(LabError::Domain(format!("theta probes must be positive, got {theta}")));
        }
        let v = evaluator.as_ref().and_then(|e| e.log_lambda(theta).ok());
        if let Some(v) = v {
            h1_pass &= v.is_finite();
        }
        log_lambda.push(v);
    }
    let h1 = H1Report {
        pass: h1_pass,
        theta_set: "(0, inf)".into(),
        probes: theta_probes.to_vec(),
        log_lambda,
    };

    let d0 = evaluator.as_ref().and_then(|e| e.derivative(0.0).ok());
    let d1 = evaluator.as_ref().and_then(|e| e.derivative(1.0).ok());
    let theorem_hypotheses = matches!((d0, d1), (Some(a), Some(b)) if a < -1e-9 && b.abs() <= DRIFT_TOL);
    if !theorem_hypotheses {
        notes.push(format!("theorem hypotheses not met: Λ′(0) = {d0:?}, Λ′(1) = {d1:?}"));
    }

    Ok(ConditionsReport {
        h1,
        h2,
        h3,
        h4,
        d_lambda_0: d0,
        d_lambda_1: d1,
        theorem_hypotheses,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvPoint, OffspringLaw};

    #[test]
    fn scalar_reference_passes() {
        let m = EnvModel::scalar_poisson(&[(0.8, 0.5), (0.2, 2.0)], 2.0).unwrap();
        let rep = check_conditions(&m, &[0.5, 1.0, 2.0], 0.1, 64, 3).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.d_lambda_1.unwrap().abs() < 1e-6);
        assert!((rep.d_lambda_0.unwrap() + 0.6 * 2f64.ln()).abs() < 1e-4);
        assert!(rep.theorem_hypotheses);
        assert!((rep.h3.min_probability - 0.2).abs() < 1e-15);
        assert!((rep.h3.delta_sup - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_entry_fails_h2() {
        let pt = EnvPoint::poisson(&[vec![1.0, 0.0], vec![0.5, 1.0]]).unwrap();
        let m = EnvModel::new_unchecked(vec![(1.0, pt)], 4.0).unwrap();
        let rep = check_conditions(&m, &[1.0], 0.1, 0, 1).unwrap();
        assert!(!rep.h2.pass);
        assert!(!rep.h2.all_positive);
        assert!(rep.h2.delta_star.is_infinite());
    }

    #[test]
    fn deterministic_critical_is_flagged() {
        let m = EnvModel::scalar_poisson(&[(1.0, 1.0)], 2.0).unwrap();
        let rep = check_conditions(&m, &[1.0], 0.1, 0, 1).unwrap();
        assert!(rep.d_lambda_0.unwrap().abs() < 1e-9);
        assert!(rep.d_lambda_1.unwrap().abs() < 1e-9);
        assert!(!rep.theorem_hypotheses);
    }

    #[test]
    fn one_child_law_fails_h4() {
        let pt = EnvPoint::new(vec![OffspringLaw::table(vec![(vec![1], 1.0)])]).unwrap();
        let m = EnvModel::new(vec![(1.0, pt)], 2.0).unwrap();
        let rep = check_conditions(&m, &[1.0], 0.1, 0, 1).unwrap();
        assert!(!rep.h4.pass);
    }

    #[test]
    fn deterministic_given_seed() {
        let pt = EnvPoint::poisson(&[vec![0.5, 0.7], vec![0.9, 0.4]]).unwrap();
        let m = EnvModel::new(vec![(1.0, pt)], 3.0).unwrap();
        let a = check_conditions(&m, &[1.0], 0.01, 100, 9).unwrap();
        let b = check_conditions(&m, &[1.0], 0.01, 100, 9).unwrap();
        assert_eq!(a, b);
    }
}
