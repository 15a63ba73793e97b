//! Projective algebra on the simplex of nonnegative unit vectors, the norm
//! cocycle, and normalized left products `L_{n,k} = M_n ⋯ M_k`.

use crate::error::{domain, Result};
use crate::matrix::{l1, Matrix};

/// A point of the simplex 𝕏: nonnegative, unit L1 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// The coordinate vector e_i.
    pub fn basis(p: usize, i: usize) -> Self {
        let mut x = vec![0.0; p];
        x[i] = 1.0;
        Direction(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Direction {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `x / |x|` for a nonnegative nonzero vector.
pub fn project(x: &[f64]) -> Result<Direction> {
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return domain(format!("projection needs a finite nonnegative vector, got {x:?}"));
    }
    let n = l1(x);
    if n <= 0.0 {
        return domain("cannot project the zero vector");
    }
    Ok(Direction(x.iter().map(|v| v / n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// x·m = xm / |xm|
    Row,
    /// m·x = mx / |mx|
    Col,
}

/// Projective action of `m` on `x` and the cocycle ρ = log of the norm factor.
pub fn act(m: &Matrix, x: &Direction, side: Side) -> Result<(Direction, f64)> {
    let y = match side {
        Side::Row => m.vec_mul(x.as_slice()),
        Side::Col => m.mul_vec(x.as_slice()),
    };
    let n = l1(&y);
    if !(n > 0.0) {
        return domain("matrix annihilates the direction");
    }
    Ok((Direction(y.into_iter().map(|v| v / n).collect()), n.ln()))
}

/// `L_{last, first}` held as a unit-norm matrix and an accumulated log-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedProduct {
    mhat: Matrix,
    log_norm: f64,
    first: usize,
    last: usize,
}

impl NormalizedProduct {
    /// The empty product `L_{k-1,k}` (the identity), starting at factor `k`.
    pub fn identity(p: usize, k: usize) -> Self {
        let pf = p as f64;
        Self {
            mhat: Matrix::identity(p).scaled(1.0 / pf),
            log_norm: pf.ln(),
            first: k,
            last: k.saturating_sub(1),
        }
    }

    pub fn mhat(&self) -> &Matrix {
        &self.mhat
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// (first factor index, last factor index).
    pub fn span(&self) -> (usize, usize) {
        (self.first, self.last)
    }

    pub fn factors(&self) -> usize {
        (self.last + 1).saturating_sub(self.first)
    }

    /// Left-multiplies by `m` and renormalizes.
    pub fn extend(&self, m: &Matrix) -> Result<Self> {
        let mut out = self.clone();
        out.extend_in_place(m)?;
        Ok(out)
    }

    pub fn extend_in_place(&mut self, m: &Matrix) -> Result<()> {
        let raw = m.matmul(&self.mhat);
        let n = raw.norm();
        if !(n > 0.0) || !n.is_finite() {
            return domain("product norm is not a positive finite number");
        }
        self.mhat = raw.scaled(1.0 / n);
        self.log_norm += n.ln();
        self.last += 1;
        Ok(())
    }

    /// `exp(log_norm) · mhat`; may overflow or underflow for long products.
    pub fn raw(&self) -> Matrix {
        self.mhat.scaled(self.log_norm.exp())
    }

    /// log |L x| for a direction x (column action).
    pub fn log_norm_on(&self, x: &[f64]) -> f64 {
        self.log_norm + l1(&self.mhat.mul_vec(x)).ln()
    }
}

/// Max entry over min entry.
pub fn entry_ratio(m: &Matrix) -> Result<f64> {
    let min = m.min_entry();
    if !(min > 0.0) {
        return domain("entry ratio needs strictly positive entries");
    }
    Ok(m.max_entry() / min)
}

/// Entry ratio and whether it respects the two-factor bound Δ².
pub fn entry_ratio_check(m: &Matrix, delta: f64) -> Result<(f64, bool)> {
    let r = entry_ratio(m)?;
    Ok((r, r <= delta * delta * (1.0 + 1e-12)))
}
