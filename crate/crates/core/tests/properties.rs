use bpre_core::diagnostics::{psi_bound, psi_eval, repres_identity_check};
use bpre_core::env::{EnvModel, EnvPoint, OffspringLaw};
use bpre_core::matprod::{entry_ratio_check, project, NormalizedProduct};
use bpre_core::matrix::Matrix;
use bpre_core::spectral::{solve_eigen, DirectionGrid, EigenSettings, LambdaEvaluator, SpectralSettings};
use bpre_core::stats::Moments;
use bpre_core::survival::survival_exact_enum;
use proptest::prelude::*;

fn positive_rows(p: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.1f64..3.0, p), p)
}

fn two_type_model() -> impl Strategy<Value = EnvModel> {
    (positive_rows(2), positive_rows(2), 0.05f64..0.95).prop_map(|(a, b, w)| {
        let pa = EnvPoint::poisson(&a).unwrap();
        let pb = EnvPoint::poisson(&b).unwrap();
        let delta = pa.entry_ratio().max(pb.entry_ratio());
        EnvModel::new(vec![(w, pa), (1.0 - w, pb)], delta).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_matches_pgf(rows in positive_rows(2), v in prop::collection::vec(0.0f64..1.0, 2)) {
        let pt = EnvPoint::poisson(&rows).unwrap();
        let c = pt.survival_complement_step(&v).unwrap();
        let s: Vec<f64> = v.iter().map(|x| 1.0 - x).collect();
        for i in 0..2 {
            let mv: f64 = rows[i].iter().zip(&v).map(|(m, x)| m * x).sum();
            if mv >= 1e-3 {
                prop_assert!((c[i] + pt.pgf_eval(i, &s).unwrap() - 1.0).abs() < 1e-12);
            }
            prop_assert!((0.0..=1.0).contains(&c[i]));
        }
    }

    #[test]
    fn table_complement_matches_pgf(p0 in 0.05f64..0.9, v in 0.001f64..1.0) {
        let law = OffspringLaw::table(vec![(vec![0], p0), (vec![2], 1.0 - p0)]);
        let pt = EnvPoint::new(vec![law]).unwrap();
        let c = pt.survival_complement_step(&[v]).unwrap()[0];
        let f = pt.pgf_eval(0, &[1.0 - v]).unwrap();
        prop_assert!((c + f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_on_simplex(x in prop::collection::vec(0.0f64..10.0, 3)) {
        prop_assume!(x.iter().sum::<f64>() > 1e-9);
        let d = project(&x).unwrap();
        prop_assert!((d.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        prop_assert!(d.as_slice().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn products_respect_delta_squared(model in two_type_model(), seq in prop::collection::vec(0usize..2, 1..60)) {
        let mut prod = NormalizedProduct::identity(2, 1);
        for k in &seq {
            prod.extend_in_place(model.point(*k).mean()).unwrap();
        }
        let (_, ok) = entry_ratio_check(prod.mhat(), model.declared_delta()).unwrap();
        prop_assert!(ok);
        prop_assert!((prod.mhat().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_within_bound(rows in positive_rows(2), a in prop::collection::vec(0.01f64..5.0, 4), s in prop::collection::vec(0.0f64..0.999, 2)) {
        let pt = EnvPoint::poisson(&rows).unwrap();
        let am = Matrix::from_rows(&[a[..2].to_vec(), a[2..].to_vec()]);
        let v = psi_eval(&pt, &am, &s).unwrap();
        prop_assert!(v >= -1e-12);
        prop_assert!(v <= psi_bound(&pt, pt.entry_ratio()) * (1.0 + 1e-9));
    }

    #[test]
    fn iterated_identity_holds(model in two_type_model(), seq in prop::collection::vec(0usize..2, 1..31), s in prop::collection::vec(0.0f64..0.99, 2), i in 0usize..2) {
        let rep = repres_identity_check(&model, &seq, i, &s).unwrap();
        prop_assert!(rep.rel_error <= 1e-8, "rel error {}", rep.rel_error);
        prop_assert!(rep.psi.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn moments_merge_any_split(xs in prop::collection::vec(-100.0f64..100.0, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let mut all = Moments::default();
        xs.iter().for_each(|x| all.push(*x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..cut].iter().for_each(|x| a.push(*x));
        xs[cut..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        prop_assert_eq!(a.count, all.count);
        prop_assert!((a.mean() - all.mean()).abs() < 1e-9);
        prop_assert!((a.variance() - all.variance()).abs() < 1e-7 * (1.0 + all.variance()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_shifts_log_lambda(model in two_type_model(), c in 0.2f64..3.0, theta in 0.2f64..2.0) {
        let settings = SpectralSettings { resolution: Some(60), ..SpectralSettings::default() };
        let base = LambdaEvaluator::new(&model, settings).unwrap().log_lambda(theta).unwrap();
        let scaled = LambdaEvaluator::new(&model.scale_means(c).unwrap(), settings).unwrap().log_lambda(theta).unwrap();
        prop_assert!((scaled - base - theta * c.ln()).abs() < 1e-9);
    }

    #[test]
    fn lambda_one_is_mean_spectral_radius(model in two_type_model()) {
        let grid = DirectionGrid::new(2, 60).unwrap();
        let sol = solve_eigen(1.0, &model, &grid, EigenSettings::default()).unwrap();
        let mut mean = Matrix::zeros(2);
        for sc in model.scenarios() {
            for r in 0..2 {
                for c in 0..2 {
                    mean[(r, c)] += sc.weight * sc.point.mean()[(r, c)];
                }
            }
        }
        let tr = mean[(0, 0)] + mean[(1, 1)];
        let det = mean[(0, 0)] * mean[(1, 1)] - mean[(0, 1)] * mean[(1, 0)];
        let rho = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
        prop_assert!((sol.lambda - rho).abs() < 1e-9 * rho);
    }

    #[test]
    fn survival_nonincreasing(m1 in 0.2f64..3.0, m2 in 0.2f64..3.0, w in 0.1f64..0.9) {
        let model = EnvModel::scalar_poisson(&[(w, m1), (1.0 - w, m2)], 2.0).unwrap();
        let mut prev = 1.0;
        for n in 1..=10 {
            let s = survival_exact_enum(&model, n, 0).unwrap();
            prop_assert!(s <= prev + 1e-15);
            prop_assert!(s > 0.0);
            prev = s;
        }
    }
}
