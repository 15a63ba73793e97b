//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Run with `cargo test -p bpre-lab --test acceptance`.

use std::error::Error;
use std::path::Path;
use std::time::Instant;

use bpre_core::diagnostics::{fourheadd_partial, proof_sweep, SweepSettings};
use bpre_core::env::{check_conditions, EnvModel, EnvPoint, OffspringLaw};
use bpre_core::matprod::Direction;
use bpre_core::rng::Streams;
use bpre_core::spectral::{
    calibrate, solve_eigen, DirectionGrid, EigenSettings, LambdaEvaluator, SpectralSettings, SpectralSolution,
};
use bpre_core::stats::CheckStatus;
use bpre_core::survival::{
    band_from_rows, survival_direct, survival_exact_enum, survival_is, theorem_band, BandSettings,
};
use bpre_core::tilted::{mu_tail_estimate, total_mass, HarmonicSettings, HarmonicTable};
use bpre_lab::{run_config, RunConfig, Stage};

type Outcome = Result<(bool, String), Box<dyn Error>>;

const LN2: f64 = std::f64::consts::LN_2;
const SEED: u64 = 20240611;

fn scalar_reference() -> EnvModel {
    EnvModel::scalar_poisson(&[(0.8, 0.5), (0.2, 2.0)], 2.0).unwrap()
}

fn calibrated_scalar() -> EnvModel {
    calibrate(&scalar_reference(), SpectralSettings::default()).unwrap().1
}

fn reference_p2() -> EnvModel {
    let a = EnvPoint::poisson(&[vec![1.2, 0.8], vec![0.6, 1.0]]).unwrap();
    let b = EnvPoint::poisson(&[vec![0.2, 0.1], vec![0.1, 0.3]]).unwrap();
    let m = EnvModel::new(vec![(0.5, a), (0.5, b)], 4.0).unwrap();
    calibrate(&m, SpectralSettings::default()).unwrap().1
}

fn eigen1(model: &EnvModel) -> SpectralSolution {
    let grid = DirectionGrid::default_for(model.dim()).unwrap();
    solve_eigen(1.0, model, &grid, EigenSettings::default()).unwrap()
}

/// P(μ > n) for the fair ±1 walk started at −k, killed on reaching 0.
fn lattice_tail(k: usize, n: usize) -> f64 {
    let width = k + n + 2;
    let mut p = vec![0.0; width];
    p[k] = 1.0;
    for _ in 0..n {
        let mut q = vec![0.0; width];
        for (j, v) in p.iter().enumerate().skip(1) {
            q[j - 1] += 0.5 * v;
            if j + 1 < width {
                q[j + 1] += 0.5 * v;
            }
        }
        q[0] = 0.0;
        p = q;
    }
    p.iter().sum()
}

fn ac1() -> Outcome {
    let m = scalar_reference();
    let s = eigen1(&m);
    let ev = LambdaEvaluator::new(&m, SpectralSettings::default())?;
    let d1 = ev.derivative(1.0)?;
    let d0 = ev.derivative(0.0)?;
    let rep = check_conditions(&m, &[0.5, 1.0, 2.0], 0.05, 256, SEED)?;
    let lam_err = (s.lambda - 0.8).abs();
    let d0_err = (d0 + 0.6 * LN2).abs();
    let ok = lam_err <= 1e-9 && d1.abs() <= 1e-6 && d0_err <= 1e-4 && rep.pass();
    Ok((
        ok,
        format!(
            "|λ(1)−0.8|={lam_err:.1e} |Λ′(1)|={:.1e} |Λ′(0)+0.6ln2|={d0_err:.1e} H1–H4={}",
            d1.abs(),
            rep.pass()
        ),
    ))
}

fn ac2() -> Outcome {
    let m = EnvModel::scalar_poisson(&[(0.5, 0.25), (0.5, 1.0)], 5.0)?;
    let (c, _, rep) = calibrate(&m, SpectralSettings::default())?;
    let c_err = (c - 0.27726f64.exp()).abs();
    let ok = c_err <= 1e-4 && rep.d_lambda_1_after.abs() <= 1e-6;
    Ok((
        ok,
        format!(
            "c={c:.6} |c−e^0.27726|={c_err:.1e} |Λ′(1)| after={:.1e}",
            rep.d_lambda_1_after.abs()
        ),
    ))
}

fn triangle(model: &EnvModel, n: usize, samples: usize, label: &str) -> Result<(bool, String), Box<dyn Error>> {
    let s = eigen1(model);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for i in 0..model.dim() {
        let exact = survival_exact_enum(model, n, i)?;
        let streams = Streams::new(SEED, "ac3").child((100 * n + i) as u64);
        let d = survival_direct(model, n, i, samples, &streams.child(0), s.lambda)?;
        let t = survival_is(model, n, i, samples, &s, &streams.child(1))?;
        let joint = (d.se.powi(2) + t.se.powi(2)).sqrt();
        let z = [
            (d.estimate - exact).abs() / d.se,
            (t.estimate - exact).abs() / t.se.max(1e-300),
            (d.estimate - t.estimate).abs() / joint,
        ];
        ok &= z.iter().all(|z| *z <= 3.0);
        worst = z.iter().fold(worst, |a, b| a.max(*b));
    }
    Ok((ok, format!("{label} n={n}: worst deviation {worst:.2} SE")))
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let (ok1, m1) = triangle(&scalar_reference(), 12, 200_000, "p=1")?;
    let (ok2, m2) = triangle(&reference_p2(), 10, 200_000, "p=2")?;
    let secs = start.elapsed().as_secs_f64();
    Ok((ok1 && ok2 && secs <= 60.0, format!("{m1}; {m2}; {secs:.1}s")))
}

fn ac4() -> Outcome {
    let m = scalar_reference();
    let s = eigen1(&m);
    let mut worst1: f64 = 0.0;
    for n in 1..=12 {
        worst1 = worst1.max((total_mass(&Direction::basis(1, 0), n, &m, &s)? - 1.0).abs());
    }
    let m2 = reference_p2();
    let s2 = eigen1(&m2);
    let tol2 = 10.0 * s2.residual;
    let mut worst2: f64 = 0.0;
    for n in 1..=8 {
        for i in 0..2 {
            worst2 = worst2.max((total_mass(&Direction::basis(2, i), n, &m2, &s2)? - 1.0).abs());
        }
    }
    let ok = worst1 <= 1e-12 && worst2 <= tol2.max(1e-12);
    Ok((
        ok,
        format!("p=1 max|mass−1|={worst1:.1e}; p=2 max|mass−1|={worst2:.1e} (bound {tol2:.1e})"),
    ))
}

fn ac5() -> Outcome {
    let m = calibrated_scalar();
    let s = eigen1(&m);
    let x = Direction::basis(1, 0);
    let n_list = [64, 128, 256, 512, 1024];
    let streams = Streams::new(SEED, "ac5");
    let t = mu_tail_estimate(&x, -LN2, &n_list, &m, &s, 400_000, &streams.child(0))?;
    let row = t.rows.last().unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let rel = (row.scaled - target).abs() / target;
    let exact = lattice_tail(1, 1024) * 32.0;
    let z_oracle = (row.scaled - exact).abs() / (32.0 * row.se);
    let mut cs = Vec::new();
    for (j, a) in [-LN2, -2.0 * LN2, -3.0 * LN2].iter().enumerate() {
        cs.push(mu_tail_estimate(&x, *a, &n_list, &m, &s, 100_000, &streams.child(1 + j as u64))?.fitted_c);
    }
    let finite = cs.iter().all(|c| c.is_finite() && *c > 0.0);
    let ok = rel <= 0.05 && z_oracle <= 4.0 && finite;
    Ok((
        ok,
        format!(
            "√n·P̂={:.4} (√(2/π)={target:.4}, rel {rel:.3}); DP oracle {exact:.4} at {z_oracle:.2} SE; Ĉ={cs:.3?}",
            row.scaled
        ),
    ))
}

fn ac6(table: &HarmonicTable) -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let a = -(k as f64) * LN2;
        let h = table.eval(&[1.0], a);
        worst = worst.max((h - k as f64 * LN2).abs() / (k as f64 * LN2));
    }
    let harmonic = table.harmonic(3.0);
    let bounds = table.bounds_hold();
    let (r, c) = table.fitted();
    let ok = worst <= 0.02 && harmonic && bounds;
    Ok((
        ok,
        format!("max rel error of ĥ(−k ln2) {worst:.4}; residual ≤ 3SE: {harmonic}; bounds with (R,C)=({r:.3},{c:.3}): {bounds}"),
    ))
}

fn ac7() -> Outcome {
    let m = calibrated_scalar();
    let s = eigen1(&m);
    let settings = BandSettings::default();
    let rep = theorem_band(
        &m,
        &[10, 20, 40, 80, 160],
        0,
        200_000,
        &s,
        &Streams::new(SEED, "ac7"),
        settings,
    )?;
    let in_range = rep
        .doubling
        .iter()
        .filter(|(n, _)| *n >= settings.burn_in)
        .all(|(_, r)| (settings.doubling_low..=settings.doubling_high).contains(r));

    // f(s) = (1+s)/2 in a fixed environment: a_n = √n
    let law = OffspringLaw::table(vec![(vec![0], 0.5), (vec![1], 0.5)]);
    let control = EnvModel::new(vec![(1.0, EnvPoint::new(vec![law])?)], 2.0)?;
    let cs = eigen1(&control);
    let rows = [10, 20, 40, 80, 160]
        .iter()
        .map(|&n| {
            survival_is(
                &control,
                n,
                0,
                1000,
                &cs,
                &Streams::new(SEED, "ac7-control").child(n as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sqrt_exact = rows.iter().all(|r| (r.a_n - (r.n as f64).sqrt()).abs() <= 1e-9 * r.a_n);
    let control_rep = band_from_rows(rows, settings);

    let ok = rep.status == CheckStatus::Pass
        && rep.ratio <= 3.0
        && in_range
        && sqrt_exact
        && control_rep.status == CheckStatus::Fail;
    let ratios: Vec<String> = rep.doubling.iter().map(|(n, r)| format!("{n}:{r:.3}")).collect();
    Ok((
        ok,
        format!(
            "band ratio {:.3}, doubling [{}], status {}; control a_n=√n: {sqrt_exact}, status {}",
            rep.ratio,
            ratios.join(" "),
            rep.status.as_str(),
            control_rep.status.as_str()
        ),
    ))
}

fn ac8() -> Outcome {
    let settings = SweepSettings::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, m) in [("p=1", calibrated_scalar()), ("p=2", reference_p2())] {
        let r = proof_sweep(&m, settings, &Streams::new(SEED, "ac8").child(m.dim() as u64))?;
        ok &= r.pass();
        parts.push(format!(
            "{label}: identity err {:.1e}, ψ/bound ≤ {:.3}, ψ ≥ {:.3}, Ξ rate {}, entry ratio {:.2} ≤ {:.0}",
            r.repres_max_rel_error, r.psi_max_over_bound, r.psi_min, r.xi_pass_rate, r.kers_max_ratio, r.kers_bound
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn ac9(table: &HarmonicTable) -> Outcome {
    let m = calibrated_scalar();
    let s = eigen1(&m);
    let t = fourheadd_partial(
        &m,
        &Direction::basis(1, 0),
        -LN2,
        &[64, 128, 256, 512],
        &s,
        table,
        200_000,
        &Streams::new(SEED, "ac9"),
    )?;
    let incs: Vec<String> = t
        .rows
        .iter()
        .filter_map(|r| r.increment)
        .map(|v| format!("{v:.3}"))
        .collect();
    Ok((
        t.status == CheckStatus::Pass,
        format!("increments [{}], status {}", incs.join(" "), t.status.as_str()),
    ))
}

fn ac10() -> Outcome {
    let m = calibrated_scalar();
    let s = eigen1(&m);
    let streams = Streams::new(SEED, "ac10");
    let budget = 200_000;
    let d = survival_direct(&m, 40, 0, budget, &streams.child(0), s.lambda)?;
    let t = survival_is(&m, 40, 0, budget, &s, &streams.child(1))?;
    let gain = d.rel_se() / t.rel_se();
    Ok((
        gain >= 5.0,
        format!(
            "rel SE direct {:.4}, tilted {:.5}, ratio {gain:.1}",
            d.rel_se(),
            t.rel_se()
        ),
    ))
}

fn tables_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for stage in std::fs::read_dir(dir).unwrap().flatten() {
        if stage.path().is_dir() {
            for f in std::fs::read_dir(stage.path()).unwrap().flatten() {
                let key = f.path().strip_prefix(dir).unwrap().display().to_string();
                out.push((key, std::fs::read(f.path()).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn ac11() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let cfg = RunConfig::load(&path)?;
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build()?;
    let ra = one.install(|| run_config(cfg.clone(), a.path(), Stage::All))?;
    let rb = many.install(|| run_config(cfg.clone(), b.path(), Stage::All))?;
    let (ta, tb) = (tables_under(&ra.run_dir), tables_under(&rb.run_dir));
    let ok = !ta.is_empty() && ta == tb;
    Ok((ok, format!("{} tables compared across 1 and 4 workers", ta.len())))
}

fn report(id: usize, title: &str, outcome: Outcome, failures: &mut usize) {
    let (ok, msg) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    if !ok {
        *failures += 1;
    }
    println!("[{}] AC-{id} {title}: {msg}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    let start = Instant::now();
    let mut failures = 0;
    report(1, "closed-form scalar model", ac1(), &mut failures);
    report(2, "calibration", ac2(), &mut failures);
    report(3, "estimator equivalence", ac3(), &mut failures);
    report(4, "change-of-measure unit mass", ac4(), &mut failures);
    report(5, "first-passage tail", ac5(), &mut failures);

    let m = calibrated_scalar();
    let settings = HarmonicSettings {
        levels: 4,
        horizon: 256,
        samples: 1_000_000,
        ..HarmonicSettings::default()
    };
    let table = HarmonicTable::build(&m, &eigen1(&m), settings, &Streams::new(SEED, "ac6"));
    match &table {
        Ok(t) => report(6, "harmonic function", ac6(t), &mut failures),
        Err(e) => report(6, "harmonic function", Err(e.to_string().into()), &mut failures),
    }
    report(7, "survival band", ac7(), &mut failures);
    report(8, "proof identities", ac8(), &mut failures);
    match &table {
        Ok(t) => report(9, "partial-sum flattening", ac9(t), &mut failures),
        Err(e) => report(9, "partial-sum flattening", Err(e.to_string().into()), &mut failures),
    }
    report(10, "importance-sampling efficiency", ac10(), &mut failures);
    report(11, "reproducibility", ac11(), &mut failures);

    println!(
        "acceptance: {} of 11 passed in {:.1}s",
        11 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
