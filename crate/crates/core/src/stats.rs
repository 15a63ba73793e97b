//! Running moments for Monte Carlo averages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{batches, Streams};
use rand_chacha::ChaCha8Rng;

/// Count, mean and centered second moment of i.i.d. samples (Welford/Chan).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Outcome of a statistical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Standard errors too large to decide.
    Inconclusive,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

/// Runs `n` samples over fixed batches in parallel and merges the per-batch
/// accumulators in batch order.
pub(crate) fn run_batched<A, F, M>(n: usize, streams: &Streams, init: A, per_batch: F, merge: M) -> A
where
    A: Clone + Send + Sync,
    F: Fn(&mut ChaCha8Rng, usize, &mut A) + Sync,
    M: Fn(&mut A, &A),
{
    let parts: Vec<A> = batches(n)
        .into_par_iter()
        .map(|(idx, len)| {
            let mut rng = streams.batch(idx);
            let mut acc = init.clone();
            per_batch(&mut rng, len, &mut acc);
            acc
        })
        .collect();
    let mut total = init;
    for p in &parts {
        merge(&mut total, p);
    }
    total
}
