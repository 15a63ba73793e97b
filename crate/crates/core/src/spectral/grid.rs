use crate::error::{LabError, Result};

/// Interpolation stencil: up to three (node, weight) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub idx: [usize; 3],
    pub w: [f64; 3],
    pub len: usize,
}

impl Stencil {
    fn single(i: usize) -> Self {
        Self {
            idx: [i, 0, 0],
            w: [1.0, 0.0, 0.0],
            len: 1,
        }
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        (0..self.len).map(|k| self.w[k] * values[self.idx[k]]).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.w[k]))
    }
}

/// Structured discretization of the simplex for p ∈ {1, 2, 3}.
///
/// p = 1 is the single point {1}. For p = 2 nodes are (t, 1−t) with t on a
/// uniform grid of `resolution + 1` points. For p = 3 nodes are the
/// barycentric points (i, j, N−i−j)/N with N = `resolution`. Functions are
/// interpolated piecewise-linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    p: usize,
    resolution: usize,
    nodes: Vec<Vec<f64>>,
}

impl DirectionGrid {
    pub fn new(p: usize, resolution: usize) -> Result<Self> {
        let nodes = match p {
            1 => vec![vec![1.0]],
            2 => {
                if resolution < 2 {
                    return Err(LabError::Domain("p = 2 grid needs at least 3 nodes".into()));
                }
                let n = resolution as f64;
                (0..=resolution)
                    .map(|j| {
                        let t = j as f64 / n;
                        vec![t, 1.0 - t]
                    })
                    .collect()
            }
            3 => {
                if resolution < 1 {
                    return Err(LabError::Domain("p = 3 grid needs resolution ≥ 1".into()));
                }
                let n = resolution as f64;
                let mut nodes = Vec::new();
                for i in 0..=resolution {
                    for j in 0..=(resolution - i) {
                        let a = i as f64 / n;
                        let b = j as f64 / n;
                        nodes.push(vec![a, b, ((resolution - i - j) as f64 / n).max(0.0)]);
                    }
                }
                nodes
            }
            _ => return Err(LabError::UnsupportedDimension(p)),
        };
        Ok(Self {
            p,
            resolution: if p == 1 { 0 } else { resolution },
            nodes,
        })
    }

    /// 401 nodes for p = 2, a 61-points-per-edge triangle for p = 3.
    pub fn default_for(p: usize) -> Result<Self> {
        match p {
            1 => Self::new(1, 0),
            2 => Self::new(2, 400),
            3 => Self::new(3, 60),
            _ => Err(LabError::UnsupportedDimension(p)),
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j]
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    /// Simplex parameters of node j (t for p = 2, (x₁, x₂) for p = 3, none
    /// for p = 1).
    pub fn params(&self, j: usize) -> &[f64] {
        match self.p {
            1 => &[],
            2 => &self.nodes[j][..1],
            _ => &self.nodes[j][..2],
        }
    }

    fn tri_index(&self, i: usize, j: usize) -> usize {
        let n = self.resolution;
        i * (n + 1) - i * i.saturating_sub(1) / 2 + j
    }

    /// Linear-interpolation stencil at direction `x`.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        match self.p {
            1 => Stencil::single(0),
            2 => {
                let n = self.resolution;
                let u = (x[0].clamp(0.0, 1.0)) * n as f64;
                let j = (u.floor() as usize).min(n - 1);
                let f = (u - j as f64).clamp(0.0, 1.0);
                Stencil {
                    idx: [j, j + 1, 0],
                    w: [1.0 - f, f, 0.0],
                    len: 2,
                }
            }
            _ => self.stencil3(x),
        }
    }

    fn stencil3(&self, x: &[f64]) -> Stencil {
        let n = self.resolution;
        let nf = n as f64;
        let u = x[0].clamp(0.0, 1.0) * nf;
        let v = x[1].clamp(0.0, 1.0) * nf;
        let i = (u.floor() as usize).min(n);
        let j = (v.floor() as usize).min(n - i);
        if i + j >= n {
            return Stencil::single(self.tri_index(i, n - i));
        }
        let fu = (u - i as f64).clamp(0.0, 1.0);
        let fv = (v - j as f64).clamp(0.0, 1.0);
        if fu + fv > 1.0 && i + j + 2 <= n {
            Stencil {
                idx: [
                    self.tri_index(i + 1, j + 1),
                    self.tri_index(i + 1, j),
                    self.tri_index(i, j + 1),
                ],
                w: [fu + fv - 1.0, 1.0 - fv, 1.0 - fu],
                len: 3,
            }
        } else {
            let mut w = [(1.0 - fu - fv).max(0.0), fu, fv];
            let s: f64 = w.iter().sum();
            for wi in &mut w {
                *wi /= s;
            }
            Stencil {
                idx: [self.tri_index(i, j), self.tri_index(i + 1, j), self.tri_index(i, j + 1)],
                w,
                len: 3,
            }
        }
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.stencil(x).apply(values)
    }
}
