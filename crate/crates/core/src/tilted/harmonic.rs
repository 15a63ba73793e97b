use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{domain, LabError, Result};
use crate::matprod::{project, Direction};
use crate::matrix::l1;
use crate::rng::Streams;
use crate::spectral::{DirectionGrid, SpectralSolution};
use crate::stats::{run_batched, Moments};
use crate::tilted::estimators::estimate_h;
use crate::tilted::kernel::{sample_path_with, TiltedKernel, TiltedPath};

/// Start level standing in for 0⁻.
const TOP_LEVEL: f64 = -1e-12;

/// Layout of a harmonic table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonicSettings {
    /// Level spacing Δa; levels are −Δa, −2Δa, …
    pub delta_a: f64,
    pub levels: usize,
    /// Resolution of the direction grid (ignored for p = 1).
    pub resolution: usize,
    pub horizon: usize,
    pub samples: usize,
}

impl Default for HarmonicSettings {
    fn default() -> Self {
        Self {
            delta_a: std::f64::consts::LN_2,
            levels: 4,
            resolution: 2,
            horizon: 512,
            samples: 200_000,
        }
    }
}

/// One table point with its harmonicity residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPoint {
    pub node: usize,
    pub direction: Vec<f64>,
    pub a: f64,
    pub h: f64,
    pub se: f64,
    /// |h(horizon) − h(horizon/2)|.
    pub gap: f64,
    /// |E¹[h(X₁,S₁); μ>1] − h(x,a)|.
    pub residual: f64,
    pub residual_se: f64,
}

/// h on direction nodes × levels, with linear interpolation in both and the
/// fallback |a| + R̂ below the deepest level.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTable {
    grid: DirectionGrid,
    delta_a: f64,
    levels: usize,
    values: Vec<f64>,
    ses: Vec<f64>,
    offset: f64,
    horizon: usize,
    points: Vec<HarmonicPoint>,
    fitted_r: f64,
    fitted_c: f64,
}

type Coeffs = Vec<(usize, f64)>;

impl HarmonicTable {
    /// Estimates h at every table point and the one-step residuals.
    pub fn build(
        model: &EnvModel,
        spectral1: &SpectralSolution,
        settings: HarmonicSettings,
        streams: &Streams,
    ) -> Result<Self> {
        if !(settings.delta_a > 0.0) || settings.levels == 0 {
            return domain("harmonic table needs Δa > 0 and at least one level");
        }
        let p = model.dim();
        let grid = if p == 1 {
            DirectionGrid::new(1, 0)?
        } else {
            DirectionGrid::new(p, settings.resolution)?
        };
        let n_points = grid.len() * settings.levels;
        let mut values = Vec::with_capacity(n_points);
        let mut ses = Vec::with_capacity(n_points);
        let mut gaps = Vec::with_capacity(n_points);
        for node in 0..grid.len() {
            let x = project(grid.node(node))?;
            for j in 1..=settings.levels {
                let a = -(j as f64) * settings.delta_a;
                let est = estimate_h(
                    &x,
                    a,
                    model,
                    spectral1,
                    settings.horizon,
                    settings.samples,
                    &streams.child((node * settings.levels + j) as u64),
                )?;
                values.push(est.h);
                ses.push(est.se);
                gaps.push(est.gap);
            }
        }
        // h(x, 0⁻) anchors interpolation between the top level and 0
        for node in 0..grid.len() {
            let x = project(grid.node(node))?;
            let est = estimate_h(
                &x,
                TOP_LEVEL,
                model,
                spectral1,
                settings.horizon,
                settings.samples,
                &streams.child(u64::MAX - node as u64),
            )?;
            values.push(est.h);
            ses.push(est.se);
        }
        let mut table = Self {
            grid,
            delta_a: settings.delta_a,
            levels: settings.levels,
            values,
            ses,
            offset: 0.0,
            horizon: settings.horizon,
            points: Vec::new(),
            fitted_r: 0.0,
            fitted_c: 0.0,
        };
        table.offset = table.deep_offset();
        table.points = table.residuals(model, spectral1, &gaps)?;
        table.fit_bounds();
        Ok(table)
    }

    /// A table holding the same value everywhere.
    pub fn constant(p: usize, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return domain("constant harmonic value must be positive");
        }
        let grid = DirectionGrid::new(p, if p == 1 { 0 } else { 2 })?;
        let n = grid.len();
        let mut t = Self {
            grid,
            delta_a: 1.0,
            levels: 1,
            values: vec![value; n],
            ses: vec![0.0; n],
            offset: 0.0,
            horizon: 0,
            points: Vec::new(),
            fitted_r: 0.0,
            fitted_c: 0.0,
        };
        t.offset = f64::NAN;
        Ok(t)
    }

    fn idx(&self, node: usize, level: usize) -> usize {
        node * self.levels + (level - 1)
    }

    fn deep_offset(&self) -> f64 {
        let deep = self.levels as f64 * self.delta_a;
        let n = self.grid.len();
        (0..n)
            .map(|node| self.values[self.idx(node, self.levels)] - deep)
            .sum::<f64>()
            / n as f64
    }

    /// Table entries and coefficients giving h(x, a), plus a constant term.
    fn coefficients(&self, x: &[f64], a: f64) -> (Coeffs, f64) {
        let depth = (-a).max(0.0);
        let t = depth / self.delta_a;
        let n = self.grid.len();
        let mut out = Vec::new();
        if self.offset.is_nan() {
            // constant table
            for (node, w) in self.grid.stencil(x).entries() {
                out.push((self.idx(node, 1), w));
            }
            return (out, 0.0);
        }
        if t > self.levels as f64 {
            for node in 0..n {
                out.push((self.idx(node, self.levels), 1.0 / n as f64));
            }
            let deep = self.levels as f64 * self.delta_a;
            return (out, depth - deep);
        }
        if t < 1.0 {
            let top = n * self.levels;
            for (node, w) in self.grid.stencil(x).entries() {
                if w == 0.0 {
                    continue;
                }
                out.push((top + node, w * (1.0 - t)));
                out.push((self.idx(node, 1), w * t));
            }
            return (out, 0.0);
        }
        let (lo, hi, f) = if t == 1.0 {
            (1, 1, 0.0)
        } else {
            let lo = (t.floor() as usize).min(self.levels - 1);
            (lo, lo + 1, t - lo as f64)
        };
        for (node, w) in self.grid.stencil(x).entries() {
            if w == 0.0 {
                continue;
            }
            out.push((self.idx(node, lo), w * (1.0 - f)));
            if hi != lo {
                out.push((self.idx(node, hi), w * f));
            }
        }
        (out, 0.0)
    }

    /// h(x, a) by interpolation, or |a| + R̂ below the table.
    pub fn eval(&self, x: &[f64], a: f64) -> f64 {
        let (c, k) = self.coefficients(x, a);
        c.iter().map(|(i, w)| w * self.values[*i]).sum::<f64>() + k
    }

    fn residuals(&self, model: &EnvModel, spectral1: &SpectralSolution, gaps: &[f64]) -> Result<Vec<HarmonicPoint>> {
        let kernel = TiltedKernel::new(model, spectral1)?;
        let mut points = Vec::with_capacity(self.values.len());
        for node in 0..self.grid.len() {
            let x = self.grid.node(node);
            let dist = kernel.step_distribution(x);
            for j in 1..=self.levels {
                let a = -(j as f64) * self.delta_a;
                let me = self.idx(node, j);
                let mut coeff = vec![0.0; self.values.len()];
                let mut constant = 0.0;
                coeff[me] -= 1.0;
                for (k, sc) in model.scenarios().iter().enumerate() {
                    let y = sc.point.mean().mul_vec(x);
                    let n = l1(&y);
                    let s1 = a + n.ln();
                    if s1 >= 0.0 {
                        continue;
                    }
                    let y: Vec<f64> = y.iter().map(|v| v / n).collect();
                    let (c, k0) = self.coefficients(&y, s1);
                    for (i, w) in c {
                        coeff[i] += dist.raw[k] * w;
                    }
                    constant += dist.raw[k] * k0;
                }
                let value: f64 = coeff.iter().zip(&self.values).map(|(c, v)| c * v).sum::<f64>() + constant;
                let se = coeff
                    .iter()
                    .zip(&self.ses)
                    .map(|(c, s)| (c * s).powi(2))
                    .sum::<f64>()
                    .sqrt();
                points.push(HarmonicPoint {
                    node,
                    direction: x.to_vec(),
                    a,
                    h: self.values[me],
                    se: self.ses[me],
                    gap: gaps[me],
                    residual: value.abs(),
                    residual_se: se,
                });
            }
        }
        Ok(points)
    }

    fn fit_bounds(&mut self) {
        let mut r: f64 = 0.0;
        let mut c: f64 = 0.0;
        for pt in &self.points {
            let abs_a = pt.a.abs();
            r = r.max(abs_a - pt.h).max((1.0 + abs_a) / (1.0 + pt.h) - 1.0);
            c = c.max(pt.h / (1.0 + abs_a)).max(1.0 / pt.h);
        }
        self.fitted_r = r + 0.01;
        self.fitted_c = c * 1.01;
    }

    pub fn points(&self) -> &[HarmonicPoint] {
        &self.points
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn delta_a(&self) -> f64 {
        self.delta_a
    }

    /// R̂ in the fallback |a| + R̂.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Fitted (R, C).
    pub fn fitted(&self) -> (f64, f64) {
        (self.fitted_r, self.fitted_c)
    }

    /// h > 0 and both bounds hold at every table point with the fitted (R, C).
    pub fn bounds_hold(&self) -> bool {
        let (r, c) = self.fitted();
        r > 0.0
            && c.is_finite()
            && self.points.iter().all(|pt| {
                let abs_a = pt.a.abs();
                pt.h > 0.0
                    && (1.0 / c).max(abs_a - r) < pt.h
                    && pt.h <= c * (1.0 + abs_a)
                    && 1.0 + abs_a <= (r + 1.0) * (1.0 + pt.h)
            })
    }

    /// Residual ≤ `k` combined standard errors at every point.
    pub fn harmonic(&self, k: f64) -> bool {
        self.points.iter().all(|pt| pt.residual <= k * pt.residual_se)
    }
}

/// Monte Carlo value with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub value: f64,
    pub se: f64,
}

/// Ê_{x,a}[Y_n] = E¹[Y_n h(X_n, S_n); μ > n] / h(x, a).
#[allow(clippy::too_many_arguments)]
pub fn conditioned_expectation<F>(
    functional: F,
    x: &Direction,
    a: f64,
    n: usize,
    model: &EnvModel,
    spectral1: &SpectralSolution,
    table: &HarmonicTable,
    samples: usize,
    streams: &Streams,
) -> Result<McValue>
where
    F: Fn(&TiltedPath) -> f64 + Sync,
{
    if !(a < 0.0) || n == 0 {
        return domain("conditioned expectation needs a < 0 and n ≥ 1");
    }
    let kernel = TiltedKernel::new(model, spectral1)?;
    let h0 = table.eval(x.as_slice(), a);
    let (mom, bad) = run_batched(
        samples,
        streams,
        (Moments::default(), false),
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            for _ in 0..len {
                let path = sample_path_with(&kernel, x.as_slice(), a, n, rng, &mut scratch, true);
                if path.mu.is_some() {
                    acc.0.push(0.0);
                    continue;
                }
                let y = functional(&path);
                if !y.is_finite() {
                    acc.1 = true;
                }
                let hn = table.eval(&path.directions[n], path.levels[n]);
                acc.0.push(y * hn * path.correction(n) / h0);
            }
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 |= b.1;
        },
    );
    if bad {
        return Err(LabError::NonFinite("functional returned a non-finite value".into()));
    }
    Ok(McValue {
        value: mom.mean(),
        se: mom.std_error(),
    })
}
