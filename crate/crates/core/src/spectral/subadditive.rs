use crate::env::EnvModel;
use crate::error::{domain, LabError, Result};
use crate::matprod::NormalizedProduct;
use crate::rng::Streams;
use crate::stats::{run_batched, Moments};

/// Default cap on the number of enumerated sequences.
pub const ENUMERATION_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubadditiveMode {
    Enumerate,
    MonteCarlo,
}

/// `(E|L_{n,1}|^θ)^{1/n}` with a standard error on the log scale (zero when
/// enumerated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubadditiveEstimate {
    pub lambda: f64,
    pub log_se: f64,
}

/// K^n, saturating.
pub(crate) fn sequence_count(k: usize, n: usize) -> u128 {
    let mut total: u128 = 1;
    for _ in 0..n {
        total = total.saturating_mul(k as u128);
    }
    total
}

pub(crate) fn check_cap(k: usize, n: usize, cap: u128) -> Result<u128> {
    let needed = sequence_count(k, n);
    if needed > cap {
        return Err(LabError::Budget { needed, cap });
    }
    Ok(needed)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn enumerate_log_moment(theta: f64, model: &EnvModel, n: usize) -> Result<f64> {
    fn dfs(
        theta: f64,
        model: &EnvModel,
        depth: usize,
        prod: &NormalizedProduct,
        log_w: f64,
        acc: &mut f64,
    ) -> Result<()> {
        if depth == 0 {
            *acc = log_add(*acc, log_w + theta * prod.log_norm());
            return Ok(());
        }
        for sc in model.scenarios() {
            let next = prod.extend(sc.point.mean())?;
            dfs(theta, model, depth - 1, &next, log_w + sc.weight.ln(), acc)?;
        }
        Ok(())
    }
    let mut acc = f64::NEG_INFINITY;
    let start = NormalizedProduct::identity(model.dim(), 1);
    dfs(theta, model, n, &start, 0.0, &mut acc)?;
    Ok(acc)
}

/// Finite-n subadditive approximation of λ(θ).
pub fn lambda_subadditive(
    theta: f64,
    model: &EnvModel,
    n: usize,
    mode: SubadditiveMode,
    samples: usize,
    streams: &Streams,
) -> Result<SubadditiveEstimate> {
    lambda_subadditive_capped(theta, model, n, mode, samples, streams, ENUMERATION_CAP)
}

pub fn lambda_subadditive_capped(
    theta: f64,
    model: &EnvModel,
    n: usize,
    mode: SubadditiveMode,
    samples: usize,
    streams: &Streams,
    cap: u128,
) -> Result<SubadditiveEstimate> {
    if n == 0 {
        return domain("subadditive estimate needs n ≥ 1");
    }
    match mode {
        SubadditiveMode::Enumerate => {
            check_cap(model.len(), n, cap)?;
            let log_m = enumerate_log_moment(theta, model, n)?;
            Ok(SubadditiveEstimate {
                lambda: (log_m / n as f64).exp(),
                log_se: 0.0,
            })
        }
        SubadditiveMode::MonteCarlo => {
            if samples < 2 {
                return domain("monte-carlo mode needs at least 2 samples");
            }
            let p = model.dim();
            let mats: Vec<_> = model.scenarios().iter().map(|s| s.point.mean()).collect();
            // Samples are scaled by exp(-shift) to stay in range.
            let shift = theta * (n as f64) * model_log_scale(model);
            let mom = run_batched(
                samples,
                streams,
                Moments::default(),
                |rng, len, acc| {
                    for _ in 0..len {
                        let mut prod = NormalizedProduct::identity(p, 1);
                        for _ in 0..n {
                            let k = model.sample_scenario(rng);
                            prod.extend_in_place(mats[k]).expect("positive scenario matrix");
                        }
                        acc.push((theta * prod.log_norm() - shift).exp());
                    }
                },
                |a, b| a.merge(b),
            );
            let mean = mom.mean();
            if !(mean > 0.0) || !mean.is_finite() {
                return Err(LabError::NonFinite("monte-carlo moment".into()));
            }
            Ok(SubadditiveEstimate {
                lambda: ((mean.ln() + shift) / n as f64).exp(),
                log_se: mom.std_error() / (mean * n as f64),
            })
        }
    }
}

/// Weighted mean of log |M_k|, used to centre Monte Carlo samples.
fn model_log_scale(model: &EnvModel) -> f64 {
    model
        .scenarios()
        .iter()
        .map(|s| s.weight * s.point.mean().norm().ln())
        .sum()
}
