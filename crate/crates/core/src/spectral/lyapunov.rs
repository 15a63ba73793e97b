use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{LabError, Result};
use crate::spectral::grid::DirectionGrid;
use crate::spectral::transfer::{spectral_radius, EigenSettings, TransferGeometry};

/// Grid and solver controls shared by the spectral routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSettings {
    /// Grid resolution; `None` picks the per-dimension default.
    pub resolution: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    /// Finite-difference step for Λ′.
    pub h_theta: f64,
    /// Combine steps h and h/2 (Richardson) in derivative estimates.
    pub richardson: bool,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        let e = EigenSettings::default();
        Self {
            resolution: None,
            tol: e.tol,
            max_iter: e.max_iter,
            h_theta: 1e-3,
            richardson: true,
        }
    }
}

impl SpectralSettings {
    pub fn eigen(&self) -> EigenSettings {
        EigenSettings {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn grid(&self, p: usize) -> Result<DirectionGrid> {
        match self.resolution {
            Some(r) if p > 1 => DirectionGrid::new(p, r),
            _ => DirectionGrid::default_for(p),
        }
    }
}

/// Evaluates Λ(θ) = log λ(θ) on one model with cached geometry.
pub struct LambdaEvaluator {
    geometry: TransferGeometry,
    settings: SpectralSettings,
}

impl LambdaEvaluator {
    pub fn new(model: &EnvModel, settings: SpectralSettings) -> Result<Self> {
        let grid = settings.grid(model.dim())?;
        Ok(Self {
            geometry: TransferGeometry::new(model, &grid, false)?,
            settings,
        })
    }

    pub fn log_lambda(&self, theta: f64) -> Result<f64> {
        Ok(spectral_radius(&self.geometry, theta, self.settings.eigen())?.ln())
    }

    fn central(&self, theta: f64, h: f64) -> Result<f64> {
        Ok((self.log_lambda(theta + h)? - self.log_lambda(theta - h)?) / (2.0 * h))
    }

    /// Λ′(θ) by central differences.
    pub fn derivative(&self, theta: f64) -> Result<f64> {
        let h = self.settings.h_theta;
        let d = self.central(theta, h)?;
        if !self.settings.richardson {
            return Ok(d);
        }
        let d2 = self.central(theta, h / 2.0)?;
        Ok((4.0 * d2 - d) / 3.0)
    }
}

/// Λ on a θ grid with the derivatives at 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCurve {
    pub theta_grid: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub d_lambda_0: f64,
    pub d_lambda_1: f64,
    pub h_theta: f64,
    /// Smallest discrete second difference, normalized by the squared spacing.
    pub min_second_difference: f64,
    pub convex: bool,
    pub calibration: Option<f64>,
}

/// Λ on `theta_grid` plus Λ′(0) and Λ′(1).
pub fn lyapunov_curve(model: &EnvModel, theta_grid: &[f64], settings: SpectralSettings) -> Result<LyapunovCurve> {
    if theta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::Domain("theta grid must be strictly increasing".into()));
    }
    let eval = LambdaEvaluator::new(model, settings)?;
    let lambda_values = theta_grid
        .iter()
        .map(|t| eval.log_lambda(*t))
        .collect::<Result<Vec<_>>>()?;
    let mut min_second = f64::INFINITY;
    for j in 1..theta_grid.len().saturating_sub(1) {
        let (t0, t1, t2) = (theta_grid[j - 1], theta_grid[j], theta_grid[j + 1]);
        let (l0, l1, l2) = (lambda_values[j - 1], lambda_values[j], lambda_values[j + 1]);
        let s = ((l2 - l1) / (t2 - t1) - (l1 - l0) / (t1 - t0)) / (0.5 * (t2 - t0));
        min_second = min_second.min(s);
    }
    Ok(LyapunovCurve {
        theta_grid: theta_grid.to_vec(),
        lambda_values,
        d_lambda_0: eval.derivative(0.0)?,
        d_lambda_1: eval.derivative(1.0)?,
        h_theta: settings.h_theta,
        min_second_difference: min_second,
        convex: min_second >= -1e-8 || !min_second.is_finite(),
        calibration: None,
    })
}

/// Outcome of [`calibrate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub c: f64,
    pub d_lambda_1_before: f64,
    pub d_lambda_1_after: f64,
    pub d_lambda_0_after: f64,
    /// Λ′(0) ≥ 0 after scaling: the environment is degenerate.
    pub degenerate: bool,
    /// |Λ′(1)| ≤ 1e-3 after scaling.
    pub pass: bool,
}

/// Scales Poisson means by c = exp(−Λ′(1)) so that Λ′(1) = 0.
pub fn calibrate(model: &EnvModel, settings: SpectralSettings) -> Result<(f64, EnvModel, CalibrationReport)> {
    if let Some(k) = model.scenarios().iter().position(|s| !s.point.is_poisson()) {
        return Err(LabError::UnsupportedFamily { scenario: k });
    }
    let before = LambdaEvaluator::new(model, settings)?.derivative(1.0)?;
    let c = (-before).exp();
    let scaled = model.scale_means(c)?;
    let eval = LambdaEvaluator::new(&scaled, settings)?;
    let after = eval.derivative(1.0)?;
    let at_zero = eval.derivative(0.0)?;
    let report = CalibrationReport {
        c,
        d_lambda_1_before: before,
        d_lambda_1_after: after,
        d_lambda_0_after: at_zero,
        degenerate: at_zero >= -1e-9,
        pass: after.abs() <= 1e-3,
    };
    Ok((c, scaled, report))
}
