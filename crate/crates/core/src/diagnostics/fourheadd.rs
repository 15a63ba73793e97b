use serde::{Deserialize, Serialize};

use crate::env::EnvModel;
use crate::error::{domain, Result};
use crate::matprod::Direction;
use crate::rng::Streams;
use crate::spectral::SpectralSolution;
use crate::stats::{run_batched, CheckStatus, Moments};
use crate::tilted::{walk, HarmonicTable, TiltedKernel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourheaddRow {
    pub n: usize,
    /// Ê[Σ_{j≤n} 𝓣_j e^{S_j}].
    pub partial: f64,
    pub se: f64,
    /// (S(n) − S(previous n)) / S(previous n).
    pub increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourheaddTable {
    pub a: f64,
    pub samples: usize,
    pub rows: Vec<FourheaddRow>,
    pub status: CheckStatus,
}

/// Conditioned partial sums of Σ 𝓣_n e^{S_n} at each n in `n_list`.
///
/// Term j is weighted by h(X_j, S_j)/h(x, a) on {μ > j}, so every partial sum
/// is estimated from the same paths and is nondecreasing in n.
#[allow(clippy::too_many_arguments)]
pub fn fourheadd_partial(
    model: &EnvModel,
    x: &Direction,
    a: f64,
    n_list: &[usize],
    spectral1: &SpectralSolution,
    table: &HarmonicTable,
    samples: usize,
    streams: &Streams,
) -> Result<FourheaddTable> {
    if !(a < 0.0) {
        return domain(format!("start level must be negative, got {a}"));
    }
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return domain("n list must be nonempty, positive and strictly increasing");
    }
    if samples < 2 {
        return domain("need at least two samples");
    }
    let kernel = TiltedKernel::new(model, spectral1)?;
    let h0 = table.eval(x.as_slice(), a);
    let n_max = *n_list.last().expect("nonempty");
    let t: Vec<f64> = model.scenarios().iter().map(|s| s.point.t()).collect();
    let acc = run_batched(
        samples,
        streams,
        vec![Moments::default(); n_list.len()],
        |rng, len, acc| {
            let mut scratch = kernel.scratch();
            for _ in 0..len {
                let mut idx = 0;
                let mut sum = 0.0;
                walk(&kernel, x.as_slice(), a, n_max, rng, &mut scratch, true, |st| {
                    if st.level < 0.0 {
                        let h = table.eval(st.direction, st.level);
                        sum += t[st.scenario] * st.level.exp() * h * st.log_correction.exp() / h0;
                    }
                    while idx < n_list.len() && n_list[idx] == st.j {
                        acc[idx].push(sum);
                        idx += 1;
                    }
                    true
                });
                for m in acc.iter_mut().skip(idx) {
                    m.push(sum);
                }
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| x.merge(y)),
    );
    let mut rows: Vec<FourheaddRow> = Vec::with_capacity(n_list.len());
    for (&n, m) in n_list.iter().zip(&acc) {
        let increment = rows.last().map(|r| (m.mean() - r.partial) / r.partial);
        rows.push(FourheaddRow {
            n,
            partial: m.mean(),
            se: m.std_error(),
            increment,
        });
    }
    let status = fourheadd_status(&rows);
    Ok(FourheaddTable {
        a,
        samples,
        rows,
        status,
    })
}

fn fourheadd_status(rows: &[FourheaddRow]) -> CheckStatus {
    if rows.iter().any(|r| !(r.partial > 0.0) || r.se > 0.1 * r.partial) {
        return CheckStatus::Inconclusive;
    }
    let inc: Vec<f64> = rows.iter().filter_map(|r| r.increment).collect();
    let decreasing = inc.windows(2).all(|w| w[1] <= w[0]);
    let flat = inc.last().is_none_or(|v| *v <= 0.1);
    if decreasing && flat {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{solve_eigen, DirectionGrid, EigenSettings};

    #[test]
    fn deterministic_drift_is_geometric() {
        let d = -0.3f64;
        let m = EnvModel::scalar_poisson(&[(1.0, d.exp())], 2.0).unwrap();
        let s = solve_eigen(
            1.0,
            &m,
            &DirectionGrid::default_for(1).unwrap(),
            EigenSettings::default(),
        )
        .unwrap();
        let table = HarmonicTable::constant(1, 1.0).unwrap();
        let a = -1.0;
        let rep = fourheadd_partial(
            &m,
            &Direction::basis(1, 0),
            a,
            &[8, 16, 32],
            &s,
            &table,
            10,
            &Streams::new(0, "f"),
        )
        .unwrap();
        for r in &rep.rows {
            let exact: f64 = (1..=r.n).map(|j| (a + j as f64 * d).exp()).sum();
            assert!((r.partial - exact).abs() < 1e-12, "{r:?} vs {exact}");
            assert_eq!(r.se, 0.0);
        }
        assert_eq!(rep.status, CheckStatus::Pass);
    }

    #[test]
    fn status_rules() {
        let row = |n, partial, increment| FourheaddRow {
            n,
            partial,
            se: 0.001,
            increment,
        };
        let good = [row(1, 1.0, None), row(2, 1.2, Some(0.2)), row(4, 1.25, Some(0.04))];
        assert_eq!(fourheadd_status(&good), CheckStatus::Pass);
        let bad = [row(1, 1.0, None), row(2, 1.2, Some(0.2)), row(4, 1.5, Some(0.25))];
        assert_eq!(fourheadd_status(&bad), CheckStatus::Fail);
        let noisy = [FourheaddRow {
            se: 1.0,
            ..row(1, 1.0, None)
        }];
        assert_eq!(fourheadd_status(&noisy), CheckStatus::Inconclusive);
    }
}
