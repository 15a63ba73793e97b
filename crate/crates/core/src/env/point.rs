use crate::env::law::OffspringLaw;
use crate::error::{domain, LabError, Result};
use crate::matrix::Matrix;

/// One realization of the environment: an offspring law per parent type,
/// together with its mean matrix and Hessians.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPoint {
    laws: Vec<OffspringLaw>,
    mean: Matrix,
    hessians: Vec<Matrix>,
    big_b: f64,
}

/// Closed-form moments of an [`EnvPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct PointMoments {
    pub mean: Matrix,
    pub hessians: Vec<Matrix>,
    /// Σ_i |B^(i)|.
    pub big_b: f64,
    /// big_b / |M|².
    pub t: f64,
}

impl EnvPoint {
    pub fn new(laws: Vec<OffspringLaw>) -> Result<Self> {
        let p = laws.len();
        if p == 0 {
            return Err(LabError::InvalidModel("environment point needs p ≥ 1 laws".into()));
        }
        for law in &laws {
            law.validate(p)?;
        }
        let rows: Vec<Vec<f64>> = laws.iter().map(|l| l.mean_row(p)).collect();
        let mean = Matrix::from_rows(&rows);
        let hessians: Vec<Matrix> = laws.iter().map(|l| l.hessian(p)).collect();
        let big_b = hessians.iter().map(Matrix::norm).sum();
        Ok(Self {
            laws,
            mean,
            hessians,
            big_b,
        })
    }

    /// Poisson-product point from its mean matrix rows.
    pub fn poisson(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| OffspringLaw::poisson(r.clone())).collect())
    }

    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.laws
    }

    pub fn mean(&self) -> &Matrix {
        &self.mean
    }

    pub fn hessians(&self) -> &[Matrix] {
        &self.hessians
    }

    pub fn big_b(&self) -> f64 {
        self.big_b
    }

    /// 𝓣 = 𝓑/|M|², infinite when the mean matrix vanishes.
    pub fn t(&self) -> f64 {
        let n = self.mean.norm();
        if n == 0.0 {
            f64::INFINITY
        } else {
            self.big_b / (n * n)
        }
    }

    pub fn is_poisson(&self) -> bool {
        self.laws
            .iter()
            .all(|l| matches!(l, OffspringLaw::PoissonProduct { .. }))
    }

    pub fn moments(&self) -> Result<PointMoments> {
        let n = self.mean.norm();
        if n == 0.0 {
            return Err(LabError::Degenerate("mean matrix is zero".into()));
        }
        Ok(PointMoments {
            mean: self.mean.clone(),
            hessians: self.hessians.clone(),
            big_b: self.big_b,
            t: self.big_b / (n * n),
        })
    }

    /// Largest over smallest mean entry (infinite if some entry is zero).
    pub fn entry_ratio(&self) -> f64 {
        let min = self.mean.min_entry();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            self.mean.max_entry() / min
        }
    }

    fn check_vector(&self, s: &[f64], name: &str) -> Result<()> {
        if s.len() != self.dim() {
            return domain(format!("{name} has length {}, expected {}", s.len(), self.dim()));
        }
        if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return domain(format!("{name} = {s:?} lies outside [0,1]^p"));
        }
        Ok(())
    }

    /// F^(i)(s).
    pub fn pgf_eval(&self, i: usize, s: &[f64]) -> Result<f64> {
        if i >= self.dim() {
            return domain(format!("type index {i} out of range for p = {}", self.dim()));
        }
        self.check_vector(s, "s")?;
        Ok(self.laws[i].pgf(s).clamp(0.0, 1.0))
    }

    /// The vector generating function F(s).
    pub fn pgf_vector(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_vector(s, "s")?;
        Ok(self.laws.iter().map(|l| l.pgf(s).clamp(0.0, 1.0)).collect())
    }

    /// Component i of F at `s` using the closed form, with no range check.
    pub fn pgf_extended(&self, i: usize, s: &[f64]) -> f64 {
        self.laws[i].pgf(s)
    }

    /// Componentwise 1 − F^(i)(1 − v).
    pub fn survival_complement_step(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_vector(v, "v")?;
        let mut out = vec![0.0; self.dim()];
        self.complement_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked form of [`Self::survival_complement_step`] for inner loops.
    pub fn complement_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, law) in out.iter_mut().zip(&self.laws) {
            *o = law.complement(v);
        }
    }

    /// Multiplies every Poisson mean by `c`.
    pub(crate) fn scaled_means(&self, c: f64) -> Option<Self> {
        let laws = self
            .laws
            .iter()
            .map(|l| match l {
                OffspringLaw::PoissonProduct { means } => Some(OffspringLaw::PoissonProduct {
                    means: means.iter().map(|m| m * c).collect(),
                }),
                OffspringLaw::FiniteTable { .. } => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Self::new(laws).ok()
    }
}
