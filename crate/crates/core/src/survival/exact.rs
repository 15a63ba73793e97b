use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, EnvPoint};
use crate::error::{domain, Result};
use crate::spectral::{check_cap, ENUMERATION_CAP};

/// Composition order for [`extinction_iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// F_{n,0}(s) = F_n(…F₁(s)).
    Forward,
    /// F_{0,n}(s) = F₁(…F_n(s)).
    Backward,
}

/// Result of an extinction iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Extinction {
    /// Component i of the composed generating function.
    pub value: f64,
    /// 𝟏 minus the composed generating function, all components.
    pub complement: Vec<f64>,
}

pub(crate) fn check_type(i: usize, p: usize) -> Result<()> {
    if i >= p {
        return domain(format!("start type {i} out of range for p = {p}"));
    }
    Ok(())
}

/// Composes the generating functions of `seq` at `s0`, tracking 𝟏 − F.
pub fn extinction_iterate(seq: &[&EnvPoint], i: usize, s0: &[f64], order: Order) -> Result<Extinction> {
    let p = s0.len();
    check_type(i, p)?;
    if s0.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return domain("s0 must lie in [0,1]^p");
    }
    if let Some(pt) = seq.iter().find(|pt| pt.dim() != p) {
        return domain(format!("point has p = {}, s0 has p = {p}", pt.dim()));
    }
    let mut v: Vec<f64> = s0.iter().map(|s| 1.0 - s).collect();
    let mut tmp = vec![0.0; p];
    let mut apply = |pt: &EnvPoint| {
        pt.complement_into(&v, &mut tmp);
        std::mem::swap(&mut v, &mut tmp);
    };
    match order {
        Order::Forward => seq.iter().for_each(|pt| apply(pt)),
        Order::Backward => seq.iter().rev().for_each(|pt| apply(pt)),
    }
    Ok(Extinction {
        value: 1.0 - v[i],
        complement: v,
    })
}

/// P(|Z_n| > 0 | Z₀ = e_i) by summing over all Kⁿ scenario sequences.
pub fn survival_exact_enum(model: &EnvModel, n: usize, i: usize) -> Result<f64> {
    survival_exact_enum_capped(model, n, i, ENUMERATION_CAP)
}

pub fn survival_exact_enum_capped(model: &EnvModel, n: usize, i: usize, cap: u128) -> Result<f64> {
    check_type(i, model.dim())?;
    check_cap(model.len(), n, cap)?;
    // Sequences and their reversals are equally likely, so the forward
    // composition sums to the same total and shares prefixes.
    let p = model.dim();
    let mut stack = vec![vec![1.0; p]; n + 1];
    let mut total = 0.0;
    fn dfs(model: &EnvModel, depth: usize, n: usize, i: usize, w: f64, stack: &mut [Vec<f64>], total: &mut f64) {
        if depth == n {
            *total += w * stack[n][i];
            return;
        }
        for (k, sc) in model.scenarios().iter().enumerate() {
            let (head, tail) = stack.split_at_mut(depth + 1);
            sc.point.complement_into(&head[depth], &mut tail[0]);
            dfs(model, depth + 1, n, i, w * model.weight(k), stack, total);
        }
    }
    dfs(model, 0, n, i, 1.0, &mut stack, &mut total);
    Ok(total.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::OffspringLaw;

    fn halving() -> EnvPoint {
        EnvPoint::new(vec![OffspringLaw::table(vec![(vec![0], 0.5), (vec![1], 0.5)])]).unwrap()
    }

    #[test]
    fn scalar_poisson_two_steps() {
        let pt = EnvPoint::poisson(&[vec![0.5]]).unwrap();
        let e = extinction_iterate(&[&pt, &pt], 0, &[0.0], Order::Backward).unwrap();
        assert!((e.value - 0.82141).abs() < 1e-5);
        assert!((e.complement[0] - 0.17859).abs() < 1e-5);
    }

    #[test]
    fn empty_sequence_returns_s0() {
        let e = extinction_iterate(&[], 0, &[0.3, 0.6], Order::Forward).unwrap();
        assert!((e.value - 0.3).abs() < 1e-15);
        assert!((e.complement[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn halving_law_is_exact() {
        let m = EnvModel::new(vec![(1.0, halving())], 2.0).unwrap();
        for n in [1, 5, 20] {
            let s = survival_exact_enum(&m, n, 0).unwrap();
            let e = 0.5f64.powi(n as i32);
            assert!((s - e).abs() <= 1e-14 * e);
        }
    }

    #[test]
    fn one_step_definition() {
        let m = EnvModel::scalar_poisson(&[(0.3, 0.5), (0.7, 1.5)], 2.0).unwrap();
        let s = survival_exact_enum(&m, 1, 0).unwrap();
        let expect = 0.3 * (1.0 - (-0.5f64).exp()) + 0.7 * (1.0 - (-1.5f64).exp());
        assert!((s - expect).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        let m = EnvModel::scalar_poisson(&[(0.5, 0.5), (0.5, 1.5)], 2.0).unwrap();
        assert!(matches!(
            survival_exact_enum_capped(&m, 11, 0, 1024),
            Err(crate::LabError::Budget {
                needed: 2048,
                cap: 1024
            })
        ));
    }

    #[test]
    fn orders_differ_on_noncommuting_points() {
        let a = EnvPoint::poisson(&[vec![0.2]]).unwrap();
        let b = EnvPoint::poisson(&[vec![3.0]]).unwrap();
        let f = extinction_iterate(&[&a, &b], 0, &[0.0], Order::Forward).unwrap();
        let g = extinction_iterate(&[&b, &a], 0, &[0.0], Order::Backward).unwrap();
        assert!((f.value - g.value).abs() < 1e-15);
        let h = extinction_iterate(&[&a, &b], 0, &[0.0], Order::Backward).unwrap();
        assert!((f.value - h.value).abs() > 1e-3);
    }
}
