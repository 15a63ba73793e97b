//! Small dense square matrices.
//!
//! Everything in the laboratory works with p ≤ a handful of types, so a flat
//! row-major buffer is all that is needed. The norm used throughout is the
//! entrywise absolute sum.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from its rows. Panics if the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            assert_eq!(row.len(), dim, "matrix rows must have length {dim}");
            data.extend_from_slice(row);
        }
        Self { dim, data }
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self {
            dim,
            data: vec![value; dim * dim],
        }
    }

    /// The single-entry indicator matrix with a one at (i, i).
    pub fn indicator(dim: usize, i: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(i, i)] = 1.0;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    /// Entrywise absolute sum |m|.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.dim, rhs.dim);
        let p = self.dim;
        let mut out = Matrix::zeros(p);
        for i in 0..p {
            for k in 0..p {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..p {
                    out.data[i * p + j] += a * rhs.data[k * p + j];
                }
            }
        }
        out
    }

    /// Column action `out = m x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(p) {
            *o = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// Row action `out = x m`.
    pub fn vec_mul_into(&self, x: &[f64], out: &mut [f64]) {
        let p = self.dim;
        for (j, o) in out.iter_mut().enumerate().take(p) {
            *o = (0..p).map(|i| x[i] * self.data[i * p + j]).sum();
        }
    }

    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.vec_mul_into(x, &mut out);
        out
    }

    pub fn all_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// L1 norm of a vector.
pub fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_actions() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(m.norm(), 10.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(m.vec_mul(&[1.0, 1.0]), vec![4.0, 6.0]);
        let sq = m.matmul(&m);
        assert_eq!(sq.rows(), vec![vec![7.0, 10.0], vec![15.0, 22.0]]);
        assert_eq!(m.transpose()[(0, 1)], 3.0);
        assert_eq!(Matrix::identity(3).norm(), 3.0);
    }
}
