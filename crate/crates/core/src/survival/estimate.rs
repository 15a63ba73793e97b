use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{domain, Result};
use crate::matrix::l1;
use crate::rng::Streams;
use crate::spectral::{check_cap, SpectralSolution, ENUMERATION_CAP};
use crate::stats::{run_batched, CheckStatus, Moments};
use crate::survival::exact::check_type;
use crate::tilted::TiltedKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Enum,
    Direct,
    Is,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Enum => "enum",
            Method::Direct => "direct",
            Method::Is => "is",
        }
    }
}

/// A survival probability estimate with its scaled statistic a_n = p̂ λ⁻ⁿ √n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub n: usize,
    pub start_type: usize,
    pub method: Method,
    pub estimate: f64,
    pub se: f64,
    pub samples: usize,
    pub a_n: f64,
}

impl SurvivalEstimate {
    pub fn new(
        n: usize,
        start_type: usize,
        method: Method,
        estimate: f64,
        se: f64,
        samples: usize,
        lambda1: f64,
    ) -> Self {
        let a_n = (estimate.ln() - n as f64 * lambda1.ln()).exp() * (n as f64).sqrt();
        Self {
            n,
            start_type,
            method,
            estimate,
            se,
            samples,
            a_n,
        }
    }

    /// se / estimate, infinite for a zero estimate.
    pub fn rel_se(&self) -> f64 {
        if self.estimate > 0.0 {
            self.se / self.estimate
        } else {
            f64::INFINITY
        }
    }
}

fn check_sampling(n: usize, samples: usize, min: usize) -> Result<()> {
    if n == 0 {
        return domain("survival estimators need n ≥ 1");
    }
    if samples < min {
        return domain(format!("need at least {min} samples, got {samples}"));
    }
    Ok(())
}

/// Mean over i.i.d. environment sequences of the exact survival probability
/// 1 − F_{0,n}^{(i)}(0).
pub fn survival_direct(
    model: &EnvModel,
    n: usize,
    i: usize,
    samples: usize,
    streams: &Streams,
    lambda1: f64,
) -> Result<SurvivalEstimate> {
    check_type(i, model.dim())?;
    check_sampling(n, samples, 100)?;
    let p = model.dim();
    let mom = run_batched(
        samples,
        streams,
        Moments::default(),
        |rng, len, acc| {
            let mut seq = vec![0usize; n];
            let mut v = vec![1.0; p];
            let mut tmp = vec![0.0; p];
            for _ in 0..len {
                for k in seq.iter_mut() {
                    *k = model.sample_scenario(rng);
                }
                v.fill(1.0);
                for &k in seq.iter().rev() {
                    model.point(k).complement_into(&v, &mut tmp);
                    std::mem::swap(&mut v, &mut tmp);
                }
                acc.push(v[i]);
            }
        },
        |a, b| a.merge(b),
    );
    Ok(SurvivalEstimate::new(
        n,
        i,
        Method::Direct,
        mom.mean(),
        mom.std_error(),
        samples,
        lambda1,
    ))
}

/// Extra outputs of the tilted estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsDiagnostics {
    /// λⁿ r₁(e_i) times the mean of `inner`, taking proposal paths as ℙ¹ paths.
    pub analytic: f64,
    pub analytic_se: f64,
    /// Mean of (e_i, 𝟏 − F_{n,0}(0)) / (|L e_i| r₁(L·e_i)).
    pub inner: f64,
    pub inner_se: f64,
    /// √n · inner.
    pub inner_scaled: f64,
}

/// Tilted importance sampling with the exact proposal correction.
pub fn survival_is(
    model: &EnvModel,
    n: usize,
    i: usize,
    samples: usize,
    spectral1: &SpectralSolution,
    streams: &Streams,
) -> Result<SurvivalEstimate> {
    survival_is_detailed(model, n, i, samples, spectral1, streams).map(|(e, _)| e)
}

pub fn survival_is_detailed(
    model: &EnvModel,
    n: usize,
    i: usize,
    samples: usize,
    spectral1: &SpectralSolution,
    streams: &Streams,
) -> Result<(SurvivalEstimate, IsDiagnostics)> {
    check_type(i, model.dim())?;
    check_sampling(n, samples, 1)?;
    let kernel = TiltedKernel::new(model, spectral1)?;
    let p = model.dim();
    let (is, inner) = run_batched(
        samples,
        streams,
        (Moments::default(), Moments::default()),
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            let mut y = vec![0.0; p];
            let mut v = vec![1.0; p];
            let mut tmp = vec![0.0; p];
            for _ in 0..len {
                y.fill(0.0);
                y[i] = 1.0;
                v.fill(1.0);
                let mut plw = 0.0;
                let mut log_norm = 0.0;
                for _ in 0..n {
                    let st = kernel.step(&mut y, rng, &mut scratch);
                    model.point(st.scenario).complement_into(&v, &mut tmp);
                    std::mem::swap(&mut v, &mut tmp);
                    plw += st.log_ratio;
                    log_norm += st.log_norm;
                }
                acc.0.push(plw.exp() * v[i]);
                acc.1.push(v[i] * (-log_norm).exp() / spectral1.r_at(&y));
            }
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        },
    );
    let mut e_i = vec![0.0; p];
    e_i[i] = 1.0;
    let prefactor = (n as f64 * spectral1.lambda.ln()).exp() * spectral1.r_at(&e_i);
    let diag = IsDiagnostics {
        analytic: prefactor * inner.mean(),
        analytic_se: prefactor * inner.std_error(),
        inner: inner.mean(),
        inner_se: inner.std_error(),
        inner_scaled: inner.mean() * (n as f64).sqrt(),
    };
    let est = SurvivalEstimate::new(n, i, Method::Is, is.mean(), is.std_error(), samples, spectral1.lambda);
    Ok((est, diag))
}

/// The tilted estimator's expectation, computed by enumerating the proposal.
pub fn survival_is_enumerated(model: &EnvModel, n: usize, i: usize, spectral1: &SpectralSolution) -> Result<f64> {
    check_type(i, model.dim())?;
    check_cap(model.len(), n, ENUMERATION_CAP)?;
    let kernel = TiltedKernel::new(model, spectral1)?;
    let p = model.dim();
    let mut y = vec![0.0; p];
    y[i] = 1.0;
    let mut total = 0.0;
    #[allow(clippy::too_many_arguments)]
    fn dfs(kernel: &TiltedKernel, depth: usize, i: usize, y: &[f64], v: &[f64], log_q: f64, plw: f64, total: &mut f64) {
        if depth == 0 {
            *total += (log_q + plw).exp() * v[i];
            return;
        }
        let model = kernel.model();
        let dist = kernel.step_distribution(y);
        for (k, sc) in model.scenarios().iter().enumerate() {
            let q = dist.probs[k];
            if q == 0.0 {
                continue;
            }
            let mut z = sc.point.mean().mul_vec(y);
            let nz = l1(&z);
            z.iter_mut().for_each(|c| *c /= nz);
            let mut w = vec![0.0; v.len()];
            sc.point.complement_into(v, &mut w);
            let step = (model.weight(k) / q).ln();
            dfs(kernel, depth - 1, i, &z, &w, log_q + q.ln(), plw + step, total);
        }
    }
    dfs(&kernel, n, i, &y, &vec![1.0; p], 0.0, 0.0, &mut total);
    Ok(total)
}

/// Controls for [`theorem_band`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSettings {
    pub burn_in: usize,
    pub doubling_low: f64,
    pub doubling_high: f64,
    /// Above this relative SE the band is inconclusive.
    pub max_rel_se: f64,
}

impl Default for BandSettings {
    fn default() -> Self {
        Self {
            burn_in: 40,
            doubling_low: 0.8,
            doubling_high: 1.25,
            max_rel_se: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub rows: Vec<SurvivalEstimate>,
    pub a_min: f64,
    pub a_max: f64,
    /// a_max / a_min.
    pub ratio: f64,
    /// (n, a_{2n}/a_n) for n and 2n both in the list.
    pub doubling: Vec<(usize, f64)>,
    pub status: CheckStatus,
}

/// a_n over `n_list` by tilted sampling, with the doubling-ratio band check.
pub fn theorem_band(
    model: &EnvModel,
    n_list: &[usize],
    i: usize,
    samples: usize,
    spectral1: &SpectralSolution,
    streams: &Streams,
    settings: BandSettings,
) -> Result<BandReport> {
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return domain("n list must be nonempty, positive and strictly increasing");
    }
    let rows = n_list
        .iter()
        .map(|&n| survival_is(model, n, i, samples, spectral1, &streams.child(n as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(band_from_rows(rows, settings))
}

/// The band check on precomputed estimates (sorted by n).
pub fn band_from_rows(rows: Vec<SurvivalEstimate>, settings: BandSettings) -> BandReport {
    let a_min = rows.iter().map(|r| r.a_n).fold(f64::INFINITY, f64::min);
    let a_max = rows.iter().map(|r| r.a_n).fold(f64::NEG_INFINITY, f64::max);
    let mut doubling = Vec::new();
    for r in &rows {
        if let Some(r2) = rows.iter().find(|q| q.n == 2 * r.n) {
            doubling.push((r.n, r2.a_n / r.a_n));
        }
    }
    let band_ok = a_min > 0.0
        && a_max.is_finite()
        && doubling
            .iter()
            .filter(|(n, _)| *n >= settings.burn_in)
            .all(|(_, d)| (settings.doubling_low..=settings.doubling_high).contains(d));
    let resolved = rows.iter().all(|r| r.rel_se() <= settings.max_rel_se);
    let status = match (resolved, band_ok) {
        (false, _) => CheckStatus::Inconclusive,
        (true, true) => CheckStatus::Pass,
        (true, false) => CheckStatus::Fail,
    };
    BandReport {
        rows,
        a_min,
        a_max,
        ratio: a_max / a_min,
        doubling,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvPoint, OffspringLaw};
    use crate::spectral::{solve_eigen, DirectionGrid, EigenSettings};
    use crate::survival::survival_exact_enum;

    fn lattice() -> (EnvModel, SpectralSolution) {
        let m = EnvModel::scalar_poisson(&[(0.8, 0.5), (0.2, 2.0)], 2.0).unwrap();
        let s = solve_eigen(
            1.0,
            &m,
            &DirectionGrid::default_for(1).unwrap(),
            EigenSettings::default(),
        )
        .unwrap();
        (m, s)
    }

    fn halving() -> (EnvModel, SpectralSolution) {
        let pt = EnvPoint::new(vec![OffspringLaw::table(vec![(vec![0], 0.5), (vec![1], 0.5)])]).unwrap();
        let m = EnvModel::new(vec![(1.0, pt)], 2.0).unwrap();
        let s = solve_eigen(
            1.0,
            &m,
            &DirectionGrid::default_for(1).unwrap(),
            EigenSettings::default(),
        )
        .unwrap();
        (m, s)
    }

    #[test]
    fn direct_matches_enum() {
        let (m, s) = lattice();
        let exact = survival_exact_enum(&m, 10, 0).unwrap();
        let d = survival_direct(&m, 10, 0, 20_000, &Streams::new(1, "d"), s.lambda).unwrap();
        assert!((d.estimate - exact).abs() < 3.0 * d.se, "{d:?} vs {exact}");
    }

    #[test]
    fn is_matches_enum() {
        let (m, s) = lattice();
        let exact = survival_exact_enum(&m, 12, 0).unwrap();
        let e = survival_is(&m, 12, 0, 20_000, &s, &Streams::new(2, "is")).unwrap();
        assert!((e.estimate - exact).abs() < 3.0 * e.se, "{e:?} vs {exact}");
        assert_eq!(e.method, Method::Is);
    }

    #[test]
    fn deterministic_model_has_zero_se() {
        let (m, s) = halving();
        let d = survival_direct(&m, 6, 0, 200, &Streams::new(1, "d"), s.lambda).unwrap();
        assert!((d.estimate - 0.5f64.powi(6)).abs() < 1e-15);
        assert_eq!(d.se, 0.0);
        assert!((d.a_n - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn enumerated_proposal_equals_enum() {
        let (m, s) = lattice();
        let a = survival_is_enumerated(&m, 6, 0, &s).unwrap();
        let b = survival_exact_enum(&m, 6, 0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn halving_control_fails_band() {
        let (m, s) = halving();
        let rep = theorem_band(
            &m,
            &[10, 20, 40, 80, 160],
            0,
            200,
            &s,
            &Streams::new(0, "b"),
            BandSettings::default(),
        )
        .unwrap();
        assert_eq!(rep.status, CheckStatus::Fail);
        for (_, d) in &rep.doubling {
            assert!((d - 2f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn large_se_is_inconclusive() {
        let mk = |n, a_n, rel| SurvivalEstimate {
            n,
            start_type: 0,
            method: Method::Is,
            estimate: 1.0,
            se: rel,
            samples: 10,
            a_n,
        };
        let rep = band_from_rows(vec![mk(40, 1.0, 0.2), mk(80, 1.0, 0.01)], BandSettings::default());
        assert_eq!(rep.status, CheckStatus::Inconclusive);
        let rep = band_from_rows(vec![mk(40, 1.0, 0.01), mk(80, 1.1, 0.01)], BandSettings::default());
        assert_eq!(rep.status, CheckStatus::Pass);
    }
}
