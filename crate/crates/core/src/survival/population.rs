use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, EnvPoint, OffspringLaw};
use crate::error::{domain, LabError, Result};
use crate::rng::Streams;
use crate::stats::run_batched;

/// Default cap on the total population.
pub const PARTICLE_CAP: u64 = 1_000_000;

/// A particle-level trajectory Z₀ … Z_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub scenarios: Vec<usize>,
    pub generations: Vec<Vec<u64>>,
    /// First generation with no particles.
    pub extinction: Option<usize>,
}

impl Population {
    pub fn survives(&self) -> bool {
        self.extinction.is_none()
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

/// One generation of offspring from `z` under `point`.
fn next_generation<R: Rng + ?Sized>(point: &EnvPoint, z: &[u64], rng: &mut R) -> Vec<u64> {
    let p = z.len();
    let mut out = vec![0u64; p];
    let mut poisson_means = vec![0.0; p];
    for (law, &zi) in point.laws().iter().zip(z) {
        if zi == 0 {
            continue;
        }
        match law {
            OffspringLaw::PoissonProduct { means } => {
                for (acc, m) in poisson_means.iter_mut().zip(means) {
                    *acc += zi as f64 * m;
                }
            }
            OffspringLaw::FiniteTable { support } => {
                // multinomial over the support by sequential binomials
                let mut left = zi;
                let mut mass = 1.0;
                for e in support {
                    if left == 0 {
                        break;
                    }
                    let c = binomial(left, (e.prob / mass).min(1.0), rng);
                    for (o, &k) in out.iter_mut().zip(&e.counts) {
                        *o += c * k as u64;
                    }
                    left -= c;
                    mass -= e.prob;
                }
            }
        }
    }
    for (o, m) in out.iter_mut().zip(&poisson_means) {
        *o += poisson(*m, rng);
    }
    out
}

fn check_start(model: &EnvModel, z0: &[u64]) -> Result<()> {
    if z0.len() != model.dim() {
        return domain(format!("z0 has {} types, model has p = {}", z0.len(), model.dim()));
    }
    Ok(())
}

/// Runs the process for the given scenario sequence.
pub fn simulate_population_fixed<R: Rng + ?Sized>(
    model: &EnvModel,
    z0: &[u64],
    scenarios: &[usize],
    rng: &mut R,
    particle_cap: u64,
) -> Result<Population> {
    check_start(model, z0)?;
    if let Some(k) = scenarios.iter().find(|&&k| k >= model.len()) {
        return domain(format!("scenario index {k} out of range"));
    }
    let mut generations = vec![z0.to_vec()];
    let mut extinction = z0.iter().all(|&z| z == 0).then_some(0);
    for (j, &k) in scenarios.iter().enumerate() {
        let z = generations.last().expect("nonempty");
        let next = if extinction.is_some() {
            vec![0; z.len()]
        } else {
            next_generation(model.point(k), z, rng)
        };
        let total: u64 = next.iter().sum();
        if total > particle_cap {
            return Err(LabError::PopulationCap {
                cap: particle_cap,
                generation: j + 1,
                partial: generations,
            });
        }
        if total == 0 && extinction.is_none() {
            extinction = Some(j + 1);
        }
        generations.push(next);
    }
    Ok(Population {
        scenarios: scenarios.to_vec(),
        generations,
        extinction,
    })
}

/// Samples an environment sequence and runs the process for n generations.
pub fn simulate_population<R: Rng + ?Sized>(
    model: &EnvModel,
    z0: &[u64],
    n: usize,
    rng: &mut R,
    particle_cap: u64,
) -> Result<Population> {
    let scenarios: Vec<usize> = (0..n).map(|_| model.sample_scenario(rng)).collect();
    simulate_population_fixed(model, z0, &scenarios, rng, particle_cap)
}

/// Fraction of `samples` runs alive at generation n, with its binomial SE.
pub fn population_survival(
    model: &EnvModel,
    z0: &[u64],
    n: usize,
    samples: usize,
    streams: &Streams,
    particle_cap: u64,
) -> Result<(f64, f64)> {
    check_start(model, z0)?;
    if samples == 0 {
        return domain("need at least one sample");
    }
    let (alive, err) = run_batched(
        samples,
        streams,
        (0usize, None::<LabError>),
        |rng, len, acc| {
            for _ in 0..len {
                match simulate_population(model, z0, n, rng, particle_cap) {
                    Ok(pop) => acc.0 += usize::from(pop.survives()),
                    Err(e) => {
                        acc.1.get_or_insert(e);
                    }
                }
            }
        },
        |a, b| {
            a.0 += b.0;
            if a.1.is_none() {
                a.1 = b.1.clone();
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    let f = alive as f64 / samples as f64;
    Ok((f, (f * (1.0 - f) / samples as f64).sqrt()))
}
