use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{domain, Result};
use crate::matprod::Direction;
use crate::rng::Streams;
use crate::spectral::SpectralSolution;
use crate::stats::{run_batched, Moments};
use crate::tilted::kernel::{Scratch, TiltedKernel};

/// State after step j of a walk: level S_j, direction y_j, scenario k_j and
/// the accumulated log correction to exact ℙ¹.
pub(crate) struct WalkState<'s> {
    pub j: usize,
    pub level: f64,
    pub direction: &'s [f64],
    pub scenario: usize,
    pub log_correction: f64,
}

/// Runs up to `n` tilted steps, calling `visit` after each. Stops at μ when
/// `stop_at_mu`, or when `visit` returns false. Returns μ if it was reached.
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk<R, F>(
    kernel: &TiltedKernel,
    x: &[f64],
    a: f64,
    n: usize,
    rng: &mut R,
    scratch: &mut Scratch,
    stop_at_mu: bool,
    mut visit: F,
) -> Option<usize>
where
    R: Rng + ?Sized,
    F: FnMut(&WalkState) -> bool,
{
    let mut y = x.to_vec();
    let mut s = a;
    let mut corr = 0.0;
    let mut mu = None;
    for j in 1..=n {
        let st = kernel.step(&mut y, rng, scratch);
        s += st.log_norm;
        corr += st.log_mass;
        if mu.is_none() && s >= 0.0 {
            mu = Some(j);
        }
        let go = visit(&WalkState {
            j,
            level: s,
            direction: &y,
            scenario: st.scenario,
            log_correction: corr,
        });
        if !go || (stop_at_mu && mu.is_some()) {
            break;
        }
    }
    mu
}

fn check_start(x: &Direction, a: f64, model: &EnvModel) -> Result<()> {
    if !(a < 0.0) || !a.is_finite() {
        return domain(format!("start level must be negative and finite, got {a}"));
    }
    if x.dim() != model.dim() {
        return domain(format!(
            "start direction has p = {}, model has p = {}",
            x.dim(),
            model.dim()
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuTailRow {
    pub n: usize,
    pub p_hat: f64,
    pub se: f64,
    /// √n · P̂(μ > n).
    pub scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuTailTable {
    pub a: f64,
    pub samples: usize,
    pub rows: Vec<MuTailRow>,
    /// max over n of √n P̂ / (1 + |a|).
    pub fitted_c: f64,
    /// max over min of √n P̂ across rows.
    pub flatness: f64,
    /// (n, √(2n)P̂(μ>2n) / √n P̂(μ>n)) for n and 2n both in the list.
    pub doubling: Vec<(usize, f64)>,
}

fn check_increasing(list: &[usize], what: &str) -> Result<()> {
    if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[1] <= w[0]) {
        return domain(format!("{what} must be nonempty, positive and strictly increasing"));
    }
    Ok(())
}

/// P(μ > n) under exact ℙ¹ for every n in `n_list`, from one set of paths.
pub fn mu_tail_estimate(
    x: &Direction,
    a: f64,
    n_list: &[usize],
    model: &EnvModel,
    spectral1: &SpectralSolution,
    samples: usize,
    streams: &Streams,
) -> Result<MuTailTable> {
    check_start(x, a, model)?;
    check_increasing(n_list, "n list")?;
    let kernel = TiltedKernel::new(model, spectral1)?;
    let n_max = *n_list.last().expect("nonempty");
    let acc = run_batched(
        samples,
        streams,
        vec![Moments::default(); n_list.len()],
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            for _ in 0..len {
                let mut idx = 0;
                walk(&kernel, x.as_slice(), a, n_max, rng, &mut scratch, true, |st| {
                    if st.level < 0.0 {
                        while idx < n_list.len() && n_list[idx] == st.j {
                            acc[idx].push(st.log_correction.exp());
                            idx += 1;
                        }
                    }
                    true
                });
                for m in acc.iter_mut().skip(idx) {
                    m.push(0.0);
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y)),
    );
    let rows: Vec<MuTailRow> = n_list
        .iter()
        .zip(&acc)
        .map(|(&n, m)| MuTailRow {
            n,
            p_hat: m.mean(),
            se: m.std_error(),
            scaled: (n as f64).sqrt() * m.mean(),
        })
        .collect();
    let fitted_c = rows.iter().map(|r| r.scaled).fold(0.0, f64::max) / (1.0 + a.abs());
    let max = rows.iter().map(|r| r.scaled).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.scaled).fold(f64::INFINITY, f64::min);
    let doubling = rows
        .iter()
        .filter_map(|r| rows.iter().find(|s| s.n == 2 * r.n).map(|s| (r.n, s.scaled / r.scaled)))
        .collect();
    Ok(MuTailTable {
        a,
        samples,
        rows,
        fitted_c,
        flatness: max / min,
        doubling,
    })
}

/// Estimate of h(x, a) = lim E¹[−S_n; μ > n].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HEstimate {
    pub h: f64,
    pub se: f64,
    pub horizon: usize,
    /// The same functional at horizon / 2.
    pub h_half: f64,
    pub se_half: f64,
    /// |h(horizon) − h(horizon/2)|.
    pub gap: f64,
}

pub fn estimate_h(
    x: &Direction,
    a: f64,
    model: &EnvModel,
    spectral1: &SpectralSolution,
    horizon: usize,
    samples: usize,
    streams: &Streams,
) -> Result<HEstimate> {
    check_start(x, a, model)?;
    if horizon < 4 {
        return domain(format!("h horizon must be at least 4, got {horizon}"));
    }
    let kernel = TiltedKernel::new(model, spectral1)?;
    let half = horizon / 2;
    let acc = run_batched(
        samples,
        streams,
        [Moments::default(); 2],
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            for _ in 0..len {
                let mut vals = [0.0; 2];
                walk(&kernel, x.as_slice(), a, horizon, rng, &mut scratch, true, |st| {
                    if st.level < 0.0 && (st.j == half || st.j == horizon) {
                        let v = -st.level * st.log_correction.exp();
                        vals[usize::from(st.j == horizon)] = v;
                    }
                    true
                });
                acc[0].push(vals[0]);
                acc[1].push(vals[1]);
            }
        },
        |a, b| {
            a[0].merge(&b[0]);
            a[1].merge(&b[1]);
        },
    );
    Ok(HEstimate {
        h: acc[1].mean(),
        se: acc[1].std_error(),
        horizon,
        h_half: acc[0].mean(),
        se_half: acc[0].std_error(),
        gap: (acc[1].mean() - acc[0].mean()).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub se: f64,
    /// E¹[S_n − S₀] / n and its standard error.
    pub drift: f64,
    pub drift_se: f64,
    /// |drift| ≤ 3 drift_se.
    pub drift_ok: bool,
    /// σ̂ < 1e-6.
    pub degenerate: bool,
}

/// σ̂ = √(Var¹(S_n − S₀) / n) from unconditioned tilted paths.
pub fn estimate_sigma(
    model: &EnvModel,
    spectral1: &SpectralSolution,
    n: usize,
    samples: usize,
    streams: &Streams,
) -> Result<SigmaEstimate> {
    if n == 0 || samples < 2 {
        return domain("sigma estimate needs n ≥ 1 and at least 2 samples");
    }
    let kernel = TiltedKernel::new(model, spectral1)?;
    let p = model.dim();
    let start = vec![1.0 / p as f64; p];
    let acc = run_batched(
        samples,
        streams,
        [Moments::default(); 2],
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            for _ in 0..len {
                let mut d = 0.0;
                let mut w = 1.0;
                walk(&kernel, &start, -1.0, n, rng, &mut scratch, false, |st| {
                    d = st.level + 1.0;
                    w = st.log_correction.exp();
                    true
                });
                acc[0].push(w * d);
                acc[1].push(w * d * d);
            }
        },
        |a, b| {
            a[0].merge(&b[0]);
            a[1].merge(&b[1]);
        },
    );
    let nf = n as f64;
    let mean = acc[0].mean();
    let var = (acc[1].mean() - mean * mean).max(0.0);
    let sigma = (var / nf).sqrt();
    let se_var = acc[1].std_error();
    let se = if sigma > 0.0 {
        se_var / (2.0 * sigma * nf)
    } else {
        f64::INFINITY
    };
    let drift = mean / nf;
    let drift_se = acc[0].std_error() / nf;
    Ok(SigmaEstimate {
        sigma,
        se,
        drift,
        drift_se,
        drift_ok: drift.abs() <= 3.0 * drift_se.max(1e-15),
        degenerate: sigma < 1e-6,
    })
}
