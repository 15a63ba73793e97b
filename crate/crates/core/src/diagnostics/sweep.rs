use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::identity::{psi_bound, psi_eval, repres_identity_check, xi_lowerbound, REPRES_N_CAP};
use crate::env::EnvModel;
use crate::error::{domain, Result};
use crate::matprod::{entry_ratio, NormalizedProduct};
use crate::matrix::Matrix;
use crate::rng::Streams;

/// Sizes of the proof-machinery sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Random sequences for the identity check; lengths cycle through 1 … n_max.
    pub sequences: usize,
    pub n_max: usize,
    pub psi_triples: usize,
    pub xi_sequences: usize,
    pub xi_n: usize,
    pub products: usize,
    pub product_n: usize,
    pub tolerance: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            sequences: 1000,
            n_max: REPRES_N_CAP,
            psi_triples: 1000,
            xi_sequences: 1000,
            xi_n: 20,
            products: 1000,
            product_n: 100,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub repres_count: usize,
    pub repres_max_rel_error: f64,
    pub repres_pass: bool,
    pub psi_count: usize,
    pub psi_min: f64,
    /// max ψ / (Δ p² 𝓣).
    pub psi_max_over_bound: f64,
    pub psi_pass: bool,
    pub xi_count: usize,
    pub xi_pass_rate: f64,
    /// min Ξ_n / bound.
    pub xi_min_margin: f64,
    pub ratio_pass_rate: f64,
    pub ratio_min: f64,
    pub products_count: usize,
    pub kers_max_ratio: f64,
    /// Δ².
    pub kers_bound: f64,
    pub kers_pass: bool,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.repres_pass && self.psi_pass && self.xi_pass_rate == 1.0 && self.ratio_pass_rate == 1.0 && self.kers_pass
    }
}

fn sample_sequence<R: Rng + ?Sized>(model: &EnvModel, n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| model.sample_scenario(rng)).collect()
}

/// Runs the identity, ψ, Ξ and entry-ratio sweeps. One generator per item,
/// so results do not depend on the thread count.
pub fn proof_sweep(model: &EnvModel, settings: SweepSettings, streams: &Streams) -> Result<SweepReport> {
    if settings.n_max == 0 || settings.n_max > REPRES_N_CAP || settings.xi_n > REPRES_N_CAP {
        return domain(format!("sweep lengths must lie in 1..={REPRES_N_CAP}"));
    }
    let p = model.dim();
    let delta = model.declared_delta();

    let repres = streams.child(1);
    let errors = (0..settings.sequences)
        .into_par_iter()
        .map(|j| {
            let mut rng = repres.batch(j as u64);
            let seq = sample_sequence(model, 1 + j % settings.n_max, &mut rng);
            let s: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let i = rng.random_range(0..p);
            repres_identity_check(model, &seq, i, &s).map(|r| (r.rel_error, r.psi_ok()))
        })
        .collect::<Result<Vec<_>>>()?;
    let repres_max = errors.iter().map(|e| e.0).fold(0.0, f64::max);
    let repres_psi_ok = errors.iter().all(|e| e.1);

    let psi = streams.child(2);
    let triples = (0..settings.psi_triples)
        .into_par_iter()
        .map(|j| {
            let mut rng = psi.batch(j as u64);
            let point = model.point(model.sample_scenario(&mut rng));
            let mut a = Matrix::zeros(p);
            for r in 0..p {
                for c in 0..p {
                    a[(r, c)] = rng.sample::<f64, _>(Exp1);
                }
            }
            let s: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            psi_eval(point, &a, &s).map(|v| (v, v / psi_bound(point, delta)))
        })
        .collect::<Result<Vec<_>>>()?;
    let psi_min = triples.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let psi_max_over_bound = triples.iter().map(|t| t.1).fold(0.0, f64::max);

    let xi = streams.child(3);
    let xis = (0..settings.xi_sequences)
        .into_par_iter()
        .map(|j| {
            let mut rng = xi.batch(j as u64);
            let seq = sample_sequence(model, settings.xi_n, &mut rng);
            xi_lowerbound(model, &seq, j % p)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = xis.len().max(1) as f64;
    let xi_pass_rate = xis.iter().filter(|r| r.pass).count() as f64 / count;
    let ratio_pass_rate = xis.iter().filter(|r| r.ratio_pass).count() as f64 / count;
    let xi_min_margin = xis.iter().map(|r| r.xi / r.bound).fold(f64::INFINITY, f64::min);
    let ratio_min = xis.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);

    let prods = streams.child(4);
    let ratios = (0..settings.products)
        .into_par_iter()
        .map(|j| {
            let mut rng = prods.batch(j as u64);
            let n = 1 + j % settings.product_n;
            let mut prod = NormalizedProduct::identity(p, 1);
            for _ in 0..n {
                prod.extend_in_place(model.point(model.sample_scenario(&mut rng)).mean())?;
            }
            entry_ratio(prod.mhat())
        })
        .collect::<Result<Vec<_>>>()?;
    let kers_max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let kers_bound = delta * delta;

    Ok(SweepReport {
        repres_count: errors.len(),
        repres_max_rel_error: repres_max,
        repres_pass: repres_max <= settings.tolerance && repres_psi_ok,
        psi_count: triples.len(),
        psi_min,
        psi_max_over_bound,
        psi_pass: psi_min >= -1e-12 && psi_max_over_bound <= 1.0 + 1e-9,
        xi_count: xis.len(),
        xi_pass_rate,
        xi_min_margin,
        ratio_pass_rate,
        ratio_min,
        products_count: ratios.len(),
        kers_max_ratio,
        kers_bound,
        kers_pass: kers_max_ratio <= kers_bound * (1.0 + 1e-12),
    })
}
