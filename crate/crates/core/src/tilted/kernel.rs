use rand::Rng;

use crate::env::EnvModel;
use crate::error::{domain, Result};
use crate::matprod::Direction;
use crate::matrix::{l1, Matrix};
use crate::spectral::{check_cap, SpectralSolution, ENUMERATION_CAP};

/// Scenario probabilities of one tilted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    /// q̃ = u / Σu.
    pub probs: Vec<f64>,
    /// u_k = w_k |M_k y| r₁(M_k·y) / (λ r₁(y)).
    pub raw: Vec<f64>,
    /// |Σu − 1|.
    pub defect: f64,
}

/// The one-step tilted kernel built from the θ = 1 eigen data.
#[derive(Debug, Clone)]
pub struct TiltedKernel<'a> {
    model: &'a EnvModel,
    spectral: &'a SpectralSolution,
    mats: Vec<&'a Matrix>,
}

/// One sampled step: scenario, log|M_k y|, log Σu and log(w_k / q̃_k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub scenario: usize,
    pub log_norm: f64,
    pub log_mass: f64,
    pub log_ratio: f64,
}

impl<'a> TiltedKernel<'a> {
    pub fn new(model: &'a EnvModel, spectral: &'a SpectralSolution) -> Result<Self> {
        if spectral.dim() != model.dim() {
            return domain(format!(
                "spectral solution has p = {}, model has p = {}",
                spectral.dim(),
                model.dim()
            ));
        }
        if (spectral.theta - 1.0).abs() > 1e-12 {
            return domain(format!("tilted kernel needs θ = 1, got {}", spectral.theta));
        }
        Ok(Self {
            model,
            spectral,
            mats: model.scenarios().iter().map(|s| s.point.mean()).collect(),
        })
    }

    pub fn model(&self) -> &'a EnvModel {
        self.model
    }

    pub fn spectral(&self) -> &'a SpectralSolution {
        self.spectral
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Raw weights u_k at direction `y`, plus M_k y for every k.
    fn raw_weights(&self, y: &[f64], images: &mut [Vec<f64>], norms: &mut [f64], u: &mut [f64]) {
        let denom = self.spectral.lambda * self.spectral.r_at(y);
        for (k, m) in self.mats.iter().enumerate() {
            m.mul_vec_into(y, &mut images[k]);
            let n = l1(&images[k]);
            norms[k] = n;
            for v in images[k].iter_mut() {
                *v /= n;
            }
            u[k] = self.model.weight(k) * n * self.spectral.r_at(&images[k]) / denom;
        }
    }

    pub fn step_distribution(&self, y: &[f64]) -> StepDistribution {
        let k = self.mats.len();
        let mut images = vec![vec![0.0; self.dim()]; k];
        let mut raw = vec![0.0; k];
        let mut norms = vec![0.0; k];
        self.raw_weights(y, &mut images, &mut norms, &mut raw);
        let total: f64 = raw.iter().sum();
        StepDistribution {
            probs: raw.iter().map(|u| u / total).collect(),
            defect: (total - 1.0).abs(),
            raw,
        }
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let k = self.mats.len();
        Scratch {
            images: vec![vec![0.0; self.dim()]; k],
            norms: vec![0.0; k],
            u: vec![0.0; k],
        }
    }

    /// Draws one step from direction `y`, moving `y` to M_k·y.
    pub(crate) fn step<R: Rng + ?Sized>(&self, y: &mut [f64], rng: &mut R, scratch: &mut Scratch) -> Step {
        self.raw_weights(y, &mut scratch.images, &mut scratch.norms, &mut scratch.u);
        let total: f64 = scratch.u.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = scratch.u.len() - 1;
        for (j, uj) in scratch.u.iter().enumerate() {
            acc += uj;
            if target < acc {
                k = j;
                break;
            }
        }
        let log_norm = scratch.norms[k].ln();
        y.copy_from_slice(&scratch.images[k]);
        Step {
            scenario: k,
            log_norm,
            log_mass: total.ln(),
            log_ratio: (self.model.weight(k) * total / scratch.u[k]).ln(),
        }
    }
}

pub(crate) struct Scratch {
    images: Vec<Vec<f64>>,
    norms: Vec<f64>,
    u: Vec<f64>,
}

/// q̃(·|y) and its normalization defect.
pub fn tilted_step_distribution(
    y: &Direction,
    model: &EnvModel,
    spectral1: &SpectralSolution,
) -> Result<StepDistribution> {
    Ok(TiltedKernel::new(model, spectral1)?.step_distribution(y.as_slice()))
}

/// A trajectory of the tilted chain (X_j, S_j).
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedPath {
    pub start: Vec<f64>,
    pub a: f64,
    /// k₁ … k_n.
    pub scenarios: Vec<usize>,
    /// y₀ … y_n.
    pub directions: Vec<Vec<f64>>,
    /// S₀ … S_n.
    pub levels: Vec<f64>,
    /// First j with S_j ≥ 0.
    pub mu: Option<usize>,
    /// Σ_j log(w_{k_j} / q̃_{k_j}(y_{j−1})).
    pub proposal_log_weight: f64,
    /// log of the exact ℙ¹ over proposal likelihood ratio after j steps, j = 0 … n.
    pub log_correction: Vec<f64>,
}

impl TiltedPath {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Proposal to exact ℙ¹ weight for events decided by the first j steps.
    pub fn correction(&self, j: usize) -> f64 {
        self.log_correction[j].exp()
    }

    pub fn survives(&self, j: usize) -> bool {
        self.mu.is_none_or(|m| m > j)
    }
}

pub(crate) fn sample_path_with<R: Rng + ?Sized>(
    kernel: &TiltedKernel,
    x: &[f64],
    a: f64,
    n: usize,
    rng: &mut R,
    scratch: &mut Scratch,
    stop_at_mu: bool,
) -> TiltedPath {
    let mut y = x.to_vec();
    let mut path = TiltedPath {
        start: x.to_vec(),
        a,
        scenarios: Vec::with_capacity(n),
        directions: Vec::with_capacity(n + 1),
        levels: Vec::with_capacity(n + 1),
        mu: None,
        proposal_log_weight: 0.0,
        log_correction: Vec::with_capacity(n + 1),
    };
    path.directions.push(y.clone());
    path.levels.push(a);
    path.log_correction.push(0.0);
    let mut s = a;
    for j in 1..=n {
        let st = kernel.step(&mut y, rng, scratch);
        s += st.log_norm;
        path.scenarios.push(st.scenario);
        path.directions.push(y.clone());
        path.levels.push(s);
        path.proposal_log_weight += st.log_ratio;
        path.log_correction.push(path.log_correction[j - 1] + st.log_mass);
        if path.mu.is_none() && s >= 0.0 {
            path.mu = Some(j);
            if stop_at_mu {
                break;
            }
        }
    }
    path
}

/// Samples n steps of the tilted chain from (x, a).
pub fn sample_tilted_path<R: Rng + ?Sized>(
    x: &Direction,
    a: f64,
    n: usize,
    model: &EnvModel,
    spectral1: &SpectralSolution,
    rng: &mut R,
) -> Result<TiltedPath> {
    if !(a < 0.0) {
        return domain(format!("start level must be negative, got {a}"));
    }
    if n == 0 {
        return domain("path length must be at least 1");
    }
    let kernel = TiltedKernel::new(model, spectral1)?;
    let mut scratch = kernel.scratch();
    Ok(sample_path_with(&kernel, x.as_slice(), a, n, rng, &mut scratch, false))
}

/// p_n^θ(x, L_{n,1}) = |L x|^θ λ^{−n}(θ) r_θ(L·x) / r_θ(x) along `path`.
pub fn path_weight(theta: f64, path: &TiltedPath, spectral: &SpectralSolution) -> Result<f64> {
    if (theta - spectral.theta).abs() > 1e-12 {
        return domain(format!(
            "path weight at θ = {theta} needs the eigen data at that θ, got {}",
            spectral.theta
        ));
    }
    let n = path.len();
    let log_norm = path.levels[n] - path.a;
    let r_end = spectral.r_at(&path.directions[n]);
    let r_start = spectral.r_at(&path.start);
    Ok((theta * log_norm - n as f64 * spectral.lambda.ln()).exp() * r_end / r_start)
}

/// Σ over all Kⁿ scenario sequences of P(sequence) · p_n^θ(x, L_{n,1}).
pub fn total_mass(x: &Direction, n: usize, model: &EnvModel, spectral: &SpectralSolution) -> Result<f64> {
    check_cap(model.len(), n, ENUMERATION_CAP)?;
    if x.dim() != model.dim() || spectral.dim() != model.dim() {
        return domain("dimension mismatch between direction, model and eigen data");
    }
    fn dfs(
        model: &EnvModel,
        theta: f64,
        depth: usize,
        y: &[f64],
        log_w: f64,
        spectral: &SpectralSolution,
        acc: &mut f64,
    ) {
        if depth == 0 {
            *acc += log_w.exp() * spectral.r_at(y);
            return;
        }
        for (k, sc) in model.scenarios().iter().enumerate() {
            let mut z = sc.point.mean().mul_vec(y);
            let n = l1(&z);
            z.iter_mut().for_each(|c| *c /= n);
            let step = model.weight(k).ln() + theta * n.ln() - spectral.lambda.ln();
            dfs(model, theta, depth - 1, &z, log_w + step, spectral, acc);
        }
    }
    let mut acc = 0.0;
    dfs(model, spectral.theta, n, x.as_slice(), 0.0, spectral, &mut acc);
    Ok(acc / spectral.r_at(x.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvPoint;
    use crate::rng::Streams;
    use crate::spectral::{solve_eigen, DirectionGrid, EigenSettings};

    fn scalar(pairs: &[(f64, f64)]) -> (EnvModel, SpectralSolution) {
        let m = EnvModel::scalar_poisson(pairs, 10.0).unwrap();
        let grid = DirectionGrid::default_for(1).unwrap();
        let s = solve_eigen(1.0, &m, &grid, EigenSettings::default()).unwrap();
        (m, s)
    }

    #[test]
    fn lattice_kernel_is_fair() {
        let (m, s) = scalar(&[(0.8, 0.5), (0.2, 2.0)]);
        let d = tilted_step_distribution(&Direction::basis(1, 0), &m, &s).unwrap();
        assert!((d.probs[0] - 0.5).abs() < 1e-15);
        assert!(d.defect < 1e-15);
    }

    #[test]
    fn calibrated_pair_kernel() {
        let (m, s) = scalar(&[(0.5, 0.32988), (0.5, 1.31951)]);
        let d = tilted_step_distribution(&Direction::basis(1, 0), &m, &s).unwrap();
        assert!((d.probs[0] - 0.2).abs() < 1e-5);
        assert!((d.probs[1] - 0.8).abs() < 1e-5);
    }

    #[test]
    fn single_scenario_kernel() {
        let pt = EnvPoint::poisson(&[vec![0.5, 0.7], vec![0.9, 0.4]]).unwrap();
        let m = EnvModel::new(vec![(1.0, pt)], 3.0).unwrap();
        let grid = DirectionGrid::new(2, 40).unwrap();
        let s = solve_eigen(1.0, &m, &grid, EigenSettings::default()).unwrap();
        let d = tilted_step_distribution(&Direction::basis(2, 0), &m, &s).unwrap();
        assert_eq!(d.probs, vec![1.0]);
    }

    #[test]
    fn deterministic_levels() {
        let (m, s) = scalar(&[(1.0, 0.2f64.exp())]);
        let mut rng = Streams::new(0, "t").batch(0);
        let p = sample_tilted_path(&Direction::basis(1, 0), -0.5, 5, &m, &s, &mut rng).unwrap();
        let expect = [-0.5, -0.3, -0.1, 0.1, 0.3, 0.5];
        for (l, e) in p.levels.iter().zip(expect) {
            assert!((l - e).abs() < 1e-12);
        }
        assert_eq!(p.mu, Some(3));
    }

    #[test]
    fn two_step_path_weight() {
        let (_, s) = scalar(&[(0.8, 0.5), (0.2, 2.0)]);
        let path = TiltedPath {
            start: vec![1.0],
            a: -1.0,
            scenarios: vec![0, 1],
            directions: vec![vec![1.0]; 3],
            levels: vec![-1.0, -1.0 + 0.5f64.ln(), -1.0],
            mu: None,
            proposal_log_weight: 0.0,
            log_correction: vec![0.0; 3],
        };
        let w = path_weight(1.0, &path, &s).unwrap();
        assert!((w - 1.5625).abs() < 1e-12);
    }

    #[test]
    fn scalar_total_mass_is_one() {
        let (m, s) = scalar(&[(0.8, 0.5), (0.2, 2.0)]);
        for n in [1, 2, 8] {
            let t = total_mass(&Direction::basis(1, 0), n, &m, &s).unwrap();
            assert!((t - 1.0).abs() < 1e-12);
        }
    }
}
