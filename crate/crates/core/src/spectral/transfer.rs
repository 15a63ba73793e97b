use rayon::prelude::*;

use crate::env::EnvModel;
use crate::error::{domain, LabError, Result};
use crate::matrix::l1;
use crate::spectral::grid::{DirectionGrid, Stencil};

/// θ-independent part of the transfer operator: for every (node, scenario)
/// the log of |M x| and the interpolation stencil of M·x.
#[derive(Debug, Clone)]
pub struct TransferGeometry {
    nodes: usize,
    weights: Vec<f64>,
    log_norms: Vec<f64>,
    stencils: Vec<Stencil>,
    adjoint: bool,
}

impl TransferGeometry {
    /// `adjoint = true` uses the transposed matrices Mᵀ throughout.
    pub fn new(model: &EnvModel, grid: &DirectionGrid, adjoint: bool) -> Result<Self> {
        if grid.dim() != model.dim() {
            return domain(format!(
                "grid dimension {} does not match model dimension {}",
                grid.dim(),
                model.dim()
            ));
        }
        let mats: Vec<_> = model
            .scenarios()
            .iter()
            .map(|s| {
                if adjoint {
                    s.point.mean().transpose()
                } else {
                    s.point.mean().clone()
                }
            })
            .collect();
        let k = mats.len();
        let mut log_norms = Vec::with_capacity(grid.len() * k);
        let mut stencils = Vec::with_capacity(grid.len() * k);
        let mut y = vec![0.0; grid.dim()];
        for x in grid.nodes() {
            for m in &mats {
                m.mul_vec_into(x, &mut y);
                let n = l1(&y);
                if !(n > 0.0) {
                    return Err(LabError::Degenerate(
                        "a scenario matrix annihilates a grid direction".into(),
                    ));
                }
                for v in &mut y {
                    *v /= n;
                }
                log_norms.push(n.ln());
                stencils.push(grid.stencil(&y));
            }
        }
        Ok(Self {
            nodes: grid.len(),
            weights: model.scenarios().iter().map(|s| s.weight).collect(),
            log_norms,
            stencils,
            adjoint,
        })
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    /// Sparse matrix of the discretized operator at `theta`.
    pub fn operator(&self, theta: f64) -> TransferOperator {
        let k = self.weights.len();
        let mut row_ptr = Vec::with_capacity(self.nodes + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nodes {
            for s in 0..k {
                let e = i * k + s;
                let factor = self.weights[s] * (theta * self.log_norms[e]).exp();
                for (j, w) in self.stencils[e].entries() {
                    if w != 0.0 {
                        cols.push(j);
                        vals.push(factor * w);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        TransferOperator {
            theta,
            n: self.nodes,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// The discretized operator `(P_θ g)(x) = Σ_k w_k |M_k x|^θ g(M_k·x)` on
/// grid nodes, stored in compressed-row form.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub theta: f64,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TransferOperator {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Applies the operator to node values.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let apply_row = |i: usize| -> f64 {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|e| self.vals[e] * g[self.cols[e]])
                .sum()
        };
        if self.n >= 4096 {
            (0..self.n).into_par_iter().map(apply_row).collect()
        } else {
            (0..self.n).map(apply_row).collect()
        }
    }

    /// Pushes a measure on the nodes through the operator: `(l P)_j`.
    pub fn push_measure(&self, l: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, li) in l.iter().enumerate() {
            if *li == 0.0 {
                continue;
            }
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[e]] += li * self.vals[e];
            }
        }
        out
    }
}

/// `(P_θ g)` (or `P*_θ g` when `adjoint`) at every node of `grid`.
pub fn apply_transfer(
    theta: f64,
    model: &EnvModel,
    grid: &DirectionGrid,
    g: &[f64],
    adjoint: bool,
) -> Result<Vec<f64>> {
    if g.len() != grid.len() {
        return domain(format!("{} values for {} nodes", g.len(), grid.len()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(LabError::NonFinite("transfer operand".into()));
    }
    Ok(TransferGeometry::new(model, grid, adjoint)?.operator(theta).apply(g))
}

/// Power-iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 100_000,
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// sup_j |y_j − λ x_j|
fn eigen_gap(y: &[f64], x: &[f64], lam: f64) -> f64 {
    y.iter().zip(x).fold(0.0f64, |a, (yi, xi)| a.max((yi - lam * xi).abs()))
}

/// Dominant right eigenvector of `op`, sup-normalized. Returns (λ, r,
/// residual, iterations) with the residual measured on `r` scaled by `scale(r)`.
fn power_right(
    op: &TransferOperator,
    settings: EigenSettings,
    scale: impl Fn(&[f64]) -> f64,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let mut r = vec![1.0; op.len()];
    let mut last = f64::INFINITY;
    for it in 1..=settings.max_iter {
        let y = op.apply(&r);
        let lam = sup(&y);
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(LabError::Degenerate("operator has no positive spectral radius".into()));
        }
        let c = scale(&r);
        let residual = c * eigen_gap(&y, &r, lam);
        last = residual;
        if residual <= settings.tol {
            return Ok((lam, r, residual, it));
        }
        r = y.into_iter().map(|v| v / lam).collect();
    }
    Err(LabError::Convergence {
        iterations: settings.max_iter,
        residual: last,
    })
}

/// Dominant left eigenvector (a probability on the nodes).
fn power_left(op: &TransferOperator, settings: EigenSettings) -> Result<(f64, Vec<f64>, f64, usize)> {
    let n = op.len();
    let mut l = vec![1.0 / n as f64; n];
    let mut last = f64::INFINITY;
    for it in 1..=settings.max_iter {
        let y = op.push_measure(&l);
        let lam: f64 = y.iter().sum();
        if !(lam > 0.0) || !lam.is_finite() {
            return Err(LabError::Degenerate("operator has no positive spectral radius".into()));
        }
        let residual = eigen_gap(&y, &l, lam);
        last = residual;
        if residual <= settings.tol * lam.max(1.0) {
            return Ok((lam, l, residual, it));
        }
        l = y.into_iter().map(|v| v / lam).collect();
    }
    Err(LabError::Convergence {
        iterations: settings.max_iter,
        residual: last,
    })
}

/// Eigen data of the transfer operator and its adjoint at one θ.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub theta: f64,
    pub lambda: f64,
    pub grid: DirectionGrid,
    /// r_θ at the nodes, scaled so that Σ r·l = 1.
    pub r_values: Vec<f64>,
    /// l_θ as node masses summing to 1.
    pub l_weights: Vec<f64>,
    pub r_star_values: Vec<f64>,
    pub l_star_weights: Vec<f64>,
    /// sup over nodes of |P_θ r − λ r|.
    pub residual: f64,
    /// sup over nodes of |P*_θ r* − λ r*|.
    pub residual_star: f64,
    pub iterations: usize,
}

impl SpectralSolution {
    /// r_θ(x) by grid interpolation.
    pub fn r_at(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.r_values, x)
    }

    pub fn r_star_at(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.r_star_values, x)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

/// (λ, r, l, residual, iterations).
type EigenPair = (f64, Vec<f64>, Vec<f64>, f64, usize);

fn solve_pair(op: &TransferOperator, settings: EigenSettings) -> Result<EigenPair> {
    let (_, l, _, it_l) = power_left(op, settings)?;
    let l_ref = l.clone();
    let (lam, r, _, it_r) = power_right(op, settings, |r| {
        let s: f64 = r.iter().zip(&l_ref).map(|(a, b)| a * b).sum();
        1.0 / s
    })?;
    let s: f64 = r.iter().zip(&l).map(|(a, b)| a * b).sum();
    let r: Vec<f64> = r.into_iter().map(|v| v / s).collect();
    let pr = op.apply(&r);
    let residual = eigen_gap(&pr, &r, lam);
    Ok((lam, r, l, residual, it_l + it_r))
}

/// Solves `P_θ r = λ r`, `l P_θ = λ l` and the adjoint pair by power iteration.
pub fn solve_eigen(
    theta: f64,
    model: &EnvModel,
    grid: &DirectionGrid,
    settings: EigenSettings,
) -> Result<SpectralSolution> {
    let op = TransferGeometry::new(model, grid, false)?.operator(theta);
    let op_star = TransferGeometry::new(model, grid, true)?.operator(theta);
    let (lambda, r, l, residual, it) = solve_pair(&op, settings)?;
    let (_, r_star, l_star, residual_star, it_star) = solve_pair(&op_star, settings)?;
    Ok(SpectralSolution {
        theta,
        lambda,
        grid: grid.clone(),
        r_values: r,
        l_weights: l,
        r_star_values: r_star,
        l_star_weights: l_star,
        residual,
        residual_star,
        iterations: it + it_star,
    })
}

/// Spectral radius only, for Lyapunov-curve sweeps.
pub fn spectral_radius(geometry: &TransferGeometry, theta: f64, settings: EigenSettings) -> Result<f64> {
    let op = geometry.operator(theta);
    let (lam, _, _, _) = power_right(&op, settings, |_| 1.0)?;
    Ok(lam)
}
