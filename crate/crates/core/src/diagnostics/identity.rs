use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, EnvPoint};
use crate::error::{domain, LabError, Result};
use crate::matrix::{l1, Matrix};

/// Longest sequence accepted by the identity checks.
pub const REPRES_N_CAP: usize = 30;

/// ψ at complement v = 𝟏 − s: |a|/|a(𝟏 − f(s))| − |a|/|a m v|.
pub(crate) fn psi_from_complement(point: &EnvPoint, a: &Matrix, v: &[f64]) -> Result<f64> {
    let mut g = vec![0.0; v.len()];
    point.complement_into(v, &mut g);
    let norm = a.norm();
    let d1 = l1(&a.mul_vec(&g));
    let d2 = l1(&a.mul_vec(&point.mean().mul_vec(v)));
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return domain("ψ is undefined: a vanishes on 𝟏 − f(s) or on m(𝟏 − s)");
    }
    Ok(norm / d1 - norm / d2)
}

/// ψ_{f,a}(s) for one environment point.
pub fn psi_eval(point: &EnvPoint, a: &Matrix, s: &[f64]) -> Result<f64> {
    let p = point.dim();
    if a.dim() != p || s.len() != p {
        return domain(format!("ψ needs a {p}×{p} matrix and a length-{p} vector"));
    }
    if a.as_slice().iter().any(|x| !(*x >= 0.0)) {
        return domain("ψ needs a nonnegative matrix");
    }
    if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return domain("ψ needs s in [0,1]^p");
    }
    if s.iter().all(|x| *x == 1.0) {
        return domain("ψ is undefined at s = 𝟏");
    }
    let v: Vec<f64> = s.iter().map(|x| 1.0 - x).collect();
    psi_from_complement(point, a, &v)
}

/// The ψ bound Δ p² 𝓣.
pub fn psi_bound(point: &EnvPoint, delta: f64) -> f64 {
    let p = point.dim() as f64;
    delta * p * p * point.t()
}

/// Both sides of the iterated reciprocal-survival identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresReport {
    pub n: usize,
    pub start_type: usize,
    /// 1/(1 − F_{n,0}^{(i)}(s)).
    pub lhs: f64,
    pub rhs: f64,
    /// 1/|a_i L_{n,1}(𝟏 − s)|.
    pub matrix_term: f64,
    pub rel_error: f64,
    /// ψ_k, k = 1 … n.
    pub psi: Vec<f64>,
    /// Δ p² 𝓣_k.
    pub psi_bounds: Vec<f64>,
    /// |a_i L_{n,k+1}|, k = 1 … n.
    pub a_norms: Vec<f64>,
}

impl RepresReport {
    pub fn psi_ok(&self) -> bool {
        self.psi
            .iter()
            .zip(&self.psi_bounds)
            .all(|(p, b)| *p >= -1e-12 && *p <= b * (1.0 + 1e-9) + 1e-12)
    }
}

fn check_sequence(model: &EnvModel, seq: &[usize], i: usize) -> Result<()> {
    if i >= model.dim() {
        return domain(format!("start type {i} out of range for p = {}", model.dim()));
    }
    if seq.len() > REPRES_N_CAP {
        return Err(LabError::Budget {
            needed: seq.len() as u128,
            cap: REPRES_N_CAP as u128,
        });
    }
    if let Some(k) = seq.iter().find(|&&k| k >= model.len()) {
        return domain(format!("scenario index {k} out of range"));
    }
    Ok(())
}

/// Evaluates both sides for the scenario sequence `seq` = (k₁ … k_n).
pub fn repres_identity_check(model: &EnvModel, seq: &[usize], i: usize, s: &[f64]) -> Result<RepresReport> {
    check_sequence(model, seq, i)?;
    let p = model.dim();
    if s.len() != p || s.iter().any(|x| !(0.0..1.0).contains(x)) {
        return domain("s must lie in [0,1)^p");
    }
    let n = seq.len();
    // g_k = 𝟏 − F_{k,0}(s)
    let mut g = vec![s.iter().map(|x| 1.0 - x).collect::<Vec<f64>>()];
    for &k in seq {
        let mut next = vec![0.0; p];
        model.point(k).complement_into(g.last().expect("nonempty"), &mut next);
        g.push(next);
    }
    // a[k] = a_i L_{n,k+1} for k = 0 … n
    let mut a = vec![Matrix::indicator(p, i); n + 1];
    for k in (0..n).rev() {
        a[k] = a[k + 1].matmul(model.point(seq[k]).mean());
    }
    let lhs = 1.0 / g[n][i];
    let matrix_term = 1.0 / l1(&a[0].mul_vec(&g[0]));
    let mut psi = Vec::with_capacity(n);
    let mut psi_bounds = Vec::with_capacity(n);
    let mut a_norms = Vec::with_capacity(n);
    let mut rhs = matrix_term;
    for k in 1..=n {
        let point = model.point(seq[k - 1]);
        let ak = &a[k];
        let v = psi_from_complement(point, ak, &g[k - 1])?;
        let norm = ak.norm();
        rhs += v / norm;
        psi.push(v);
        psi_bounds.push(psi_bound(point, model.declared_delta()));
        a_norms.push(norm);
    }
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(LabError::NonFinite(format!("identity sides overflow at n = {n}")));
    }
    Ok(RepresReport {
        n,
        start_type: i,
        lhs,
        rhs,
        matrix_term,
        rel_error: (lhs - rhs).abs() / lhs,
        psi,
        psi_bounds,
        a_norms,
    })
}

/// Ξ_n, its explicit lower bound, and the row/column ratio check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub n: usize,
    pub start_type: usize,
    /// From the ψ sum.
    pub xi: f64,
    /// (1 − F_{n,0}^{(i)}(0)) / |e_i L_{n,1} 𝟏|.
    pub xi_identity: f64,
    /// (1 + Δ p² Σ_k |L_{k,1}| 𝓣_k)⁻¹.
    pub bound: f64,
    /// |e_i L_{n,1} 𝟏| / |L_{n,1} e_iᵀ|.
    pub ratio: f64,
    /// 1/(p Δ²).
    pub ratio_bound: f64,
    pub pass: bool,
    pub ratio_pass: bool,
}

pub fn xi_lowerbound(model: &EnvModel, seq: &[usize], i: usize) -> Result<XiReport> {
    let p = model.dim();
    let rep = repres_identity_check(model, seq, i, &vec![0.0; p])?;
    let row_sum = 1.0 / rep.matrix_term;
    let xi = 1.0
        / (1.0
            + rep
                .psi
                .iter()
                .zip(&rep.a_norms)
                .map(|(psi, norm)| row_sum / norm * psi)
                .sum::<f64>());
    let xi_identity = row_sum.recip() / rep.lhs;
    let delta = model.declared_delta();
    let mut prod = Matrix::identity(p);
    let mut acc = 0.0;
    for &k in seq {
        let point = model.point(k);
        prod = point.mean().matmul(&prod);
        acc += prod.norm() * point.t();
    }
    let bound = 1.0 / (1.0 + delta * (p * p) as f64 * acc);
    let col_sum: f64 = (0..p).map(|r| prod[(r, i)]).sum();
    let ratio = row_sum / col_sum;
    let ratio_bound = 1.0 / (p as f64 * delta * delta);
    Ok(XiReport {
        n: seq.len(),
        start_type: i,
        xi,
        xi_identity,
        bound,
        ratio,
        ratio_bound,
        pass: xi > 0.0 && xi <= 1.0 + 1e-12 && xi >= bound * (1.0 - 1e-12),
        ratio_pass: ratio >= ratio_bound * (1.0 - 1e-12),
    })
}
