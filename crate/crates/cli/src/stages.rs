//! Stage pipelines. Each stage writes its tables under `<run>/<stage>/` and
//! returns a [`StageRecord`] for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bpre_core::diagnostics::{fourheadd_partial, proof_sweep};
use bpre_core::env::{check_conditions_with, EnvModel};
use bpre_core::matprod::Direction;
use bpre_core::rng::Streams;
use bpre_core::spectral::{calibrate, lyapunov_curve, solve_eigen, SpectralSolution};
use bpre_core::stats::CheckStatus;
use bpre_core::survival::{survival_direct, survival_exact_enum, survival_is, theorem_band, Method, SurvivalEstimate};
use bpre_core::tilted::{estimate_sigma, mu_tail_estimate, HarmonicTable};
use bpre_core::LabError;
use clap::ValueEnum;

use crate::artifacts::{write_table, ArtifactRecord, StageRecord, Table};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::row;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Conditions,
    Lyapunov,
    Calibrate,
    Survival,
    MuTail,
    Harmonic,
    Diagnostics,
    All,
}

impl Stage {
    pub const PIPELINE: [Stage; 7] = [
        Stage::Conditions,
        Stage::Lyapunov,
        Stage::Calibrate,
        Stage::Survival,
        Stage::MuTail,
        Stage::Harmonic,
        Stage::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Conditions => "conditions",
            Stage::Lyapunov => "lyapunov",
            Stage::Calibrate => "calibrate",
            Stage::Survival => "survival",
            Stage::MuTail => "mu-tail",
            Stage::Harmonic => "harmonic",
            Stage::Diagnostics => "diagnostics",
            Stage::All => "all",
        }
    }
}

/// Worst of a set of statuses: any failure fails, then any inconclusive.
pub fn combine(statuses: impl IntoIterator<Item = CheckStatus>) -> CheckStatus {
    let mut out = CheckStatus::Pass;
    for s in statuses {
        match s {
            CheckStatus::Fail => return CheckStatus::Fail,
            CheckStatus::Inconclusive => out = CheckStatus::Inconclusive,
            CheckStatus::Pass => {}
        }
    }
    out
}

fn pass_if(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

#[derive(Default)]
struct Output {
    tables: Vec<Table>,
    values: BTreeMap<String, toml::Value>,
}

impl Output {
    fn value(&mut self, key: &str, v: impl Into<toml::Value>) {
        self.values.insert(key.to_string(), v.into());
    }
}

/// Runs stages against one config, caching the model and the eigen data.
pub struct Runner {
    cfg: RunConfig,
    run_dir: PathBuf,
    model: Option<EnvModel>,
    working: Option<EnvModel>,
    spectral1: Option<SpectralSolution>,
    harmonic: Option<HarmonicTable>,
}

impl Runner {
    pub fn new(cfg: RunConfig, run_dir: &Path) -> Self {
        Self {
            cfg,
            run_dir: run_dir.to_path_buf(),
            model: None,
            working: None,
            spectral1: None,
            harmonic: None,
        }
    }

    fn streams(&self, stage: Stage) -> Streams {
        Streams::new(self.cfg.seed, stage.name())
    }

    fn model(&mut self) -> std::result::Result<&EnvModel, LabError> {
        if self.model.is_none() {
            self.model = Some(EnvModel::from_spec(&self.cfg.model)?);
        }
        Ok(self.model.as_ref().expect("set above"))
    }

    /// The model the sampling stages use: calibrated when configured.
    fn working(&mut self) -> std::result::Result<&EnvModel, LabError> {
        if self.working.is_none() {
            let settings = self.cfg.spectral.settings();
            let calibrate_it = self.cfg.spectral.calibrate;
            let base = self.model()?.clone();
            self.working = Some(if calibrate_it {
                calibrate(&base, settings)?.1
            } else {
                base
            });
        }
        Ok(self.working.as_ref().expect("set above"))
    }

    fn spectral1(&mut self) -> std::result::Result<(EnvModel, SpectralSolution), LabError> {
        let model = self.working()?.clone();
        if self.spectral1.is_none() {
            let s = self.cfg.spectral.settings();
            self.spectral1 = Some(solve_eigen(1.0, &model, &s.grid(model.dim())?, s.eigen())?);
        }
        Ok((model, self.spectral1.clone().expect("set above")))
    }

    fn harmonic_table(&mut self) -> std::result::Result<HarmonicTable, LabError> {
        if self.harmonic.is_none() {
            let (model, s1) = self.spectral1()?;
            let streams = self.streams(Stage::Harmonic);
            self.harmonic = Some(HarmonicTable::build(&model, &s1, self.cfg.tilted.harmonic, &streams)?);
        }
        Ok(self.harmonic.clone().expect("set above"))
    }

    /// Runs one stage (not `All`) and writes its tables.
    pub fn run(&mut self, stage: Stage) -> Result<StageRecord> {
        let start = Instant::now();
        let result = match stage {
            Stage::Conditions => self.conditions(),
            Stage::Lyapunov => self.lyapunov(),
            Stage::Calibrate => self.calibrate(),
            Stage::Survival => self.survival(),
            Stage::MuTail => self.mu_tail(),
            Stage::Harmonic => self.harmonic(),
            Stage::Diagnostics => self.diagnostics(),
            Stage::All => unreachable!("`all` is expanded by the caller"),
        };
        let (status, out) = result.map_err(|source| CliError::Stage {
            stage: stage.name(),
            source,
        })?;
        let artifacts = out
            .tables
            .iter()
            .map(|t| write_table(&self.run_dir, stage.name(), t))
            .collect::<Result<Vec<ArtifactRecord>>>()?;
        Ok(StageRecord {
            status,
            wall_seconds: start.elapsed().as_secs_f64(),
            artifacts,
            values: out.values,
        })
    }

    fn conditions(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        // unchecked, so a model that violates H2 is reported rather than rejected
        let model = self.cfg.model.build_unchecked()?;
        let c = &self.cfg.conditions;
        let rep = check_conditions_with(
            &model,
            &c.theta_probes,
            c.delta,
            c.budget,
            self.cfg.seed,
            self.cfg.spectral.settings(),
        )?;
        let mut out = Output::default();

        let mut t = Table::new("hypotheses", &["hypothesis", "pass", "statistic", "reference"]);
        t.push(row!["H1", rep.h1.pass, f64::NAN, f64::NAN]);
        t.push(row!["H2", rep.h2.pass, rep.h2.delta_star, rep.h2.declared_delta]);
        t.push(row!["H3", rep.h3.pass, rep.h3.min_probability, rep.h3.delta]);
        t.push(row!["H4", rep.h4.pass, rep.h4.moment, rep.h4.min_t]);
        out.tables.push(t);

        let mut t = Table::new("probes", &["theta", "log_lambda"]);
        for (theta, v) in rep.h1.probes.iter().zip(&rep.h1.log_lambda) {
            t.push(row![*theta, v.unwrap_or(f64::NAN)]);
        }
        out.tables.push(t);

        out.value("h1", rep.h1.pass);
        out.value("h2", rep.h2.pass);
        out.value("h3", rep.h3.pass);
        out.value("h4", rep.h4.pass);
        out.value("theta_set", rep.h1.theta_set.clone());
        out.value("delta_star", rep.h2.delta_star);
        out.value("delta_sup", rep.h3.delta_sup);
        if let Some(d) = rep.d_lambda_0 {
            out.value("d_lambda_0", d);
        }
        if let Some(d) = rep.d_lambda_1 {
            out.value("d_lambda_1", d);
        }
        out.value("theorem_hypotheses", rep.theorem_hypotheses);
        out.value("notes", rep.notes.clone());
        Ok((pass_if(rep.pass()), out))
    }

    fn lyapunov(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let model = self.model()?.clone();
        let s = self.cfg.spectral.settings();
        let curve = lyapunov_curve(&model, &self.cfg.spectral.theta_grid, s)?;
        let sol = solve_eigen(1.0, &model, &s.grid(model.dim())?, s.eigen())?;
        let mut out = Output::default();

        let mut t = Table::new("curve", &["theta", "log_lambda"]);
        for (theta, v) in curve.theta_grid.iter().zip(&curve.lambda_values) {
            t.push(row![*theta, *v]);
        }
        out.tables.push(t);
        out.tables.push(eigen_table(&sol));

        let mut t = Table::new(
            "eigen_summary",
            &["theta", "lambda", "residual", "residual_star", "iterations"],
        );
        t.push(row![
            sol.theta,
            sol.lambda,
            sol.residual,
            sol.residual_star,
            sol.iterations
        ]);
        out.tables.push(t);

        out.value("d_lambda_0", curve.d_lambda_0);
        out.value("d_lambda_1", curve.d_lambda_1);
        out.value("h_theta", curve.h_theta);
        out.value("convex", curve.convex);
        out.value("min_second_difference", curve.min_second_difference);
        out.value("lambda_1", sol.lambda);
        out.value("eigen_residual", sol.residual);
        Ok((pass_if(curve.convex), out))
    }

    fn calibrate(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let model = self.model()?.clone();
        let s = self.cfg.spectral.settings();
        let (c, scaled, rep) = calibrate(&model, s)?;
        let curve = lyapunov_curve(&scaled, &self.cfg.spectral.theta_grid, s)?;
        let mut out = Output::default();

        let mut t = Table::new(
            "calibration",
            &[
                "c",
                "d_lambda_1_before",
                "d_lambda_1_after",
                "d_lambda_0_after",
                "degenerate",
                "pass",
            ],
        );
        t.push(row![
            c,
            rep.d_lambda_1_before,
            rep.d_lambda_1_after,
            rep.d_lambda_0_after,
            rep.degenerate,
            rep.pass
        ]);
        out.tables.push(t);

        let mut t = Table::new("curve", &["theta", "log_lambda"]);
        for (theta, v) in curve.theta_grid.iter().zip(&curve.lambda_values) {
            t.push(row![*theta, *v]);
        }
        out.tables.push(t);

        out.value("c", c);
        out.value("d_lambda_1_after", rep.d_lambda_1_after);
        out.value("d_lambda_0_after", rep.d_lambda_0_after);
        out.value("degenerate", rep.degenerate);
        Ok((pass_if(rep.pass && !rep.degenerate), out))
    }

    fn survival(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let (model, s1) = self.spectral1()?;
        let cfg = self.cfg.survival.clone();
        let seed = self.cfg.seed;
        let streams = self.streams(Stage::Survival);
        let mut out = Output::default();
        let mut estimates = Table::new("estimates", &["n", "i", "method", "estimate", "se", "a_n", "N", "seed"]);
        let push_est = |t: &mut Table, e: &SurvivalEstimate| {
            t.push(row![
                e.n,
                e.start_type,
                e.method.as_str(),
                e.estimate,
                e.se,
                e.a_n,
                e.samples,
                seed
            ]);
        };

        for &i in &cfg.start_types {
            for n in 1..=cfg.enum_max_n {
                let v = survival_exact_enum(&model, n, i)?;
                push_est(
                    &mut estimates,
                    &SurvivalEstimate::new(n, i, Method::Enum, v, 0.0, 0, s1.lambda),
                );
            }
        }

        let mut band = Table::new("band", &["i", "n", "a_n", "a_n_se"]);
        let mut doubling = Table::new("doubling", &["i", "n", "ratio"]);
        let mut statuses = Vec::new();
        for &i in &cfg.start_types {
            let rep = theorem_band(
                &model,
                &cfg.n_list,
                i,
                cfg.samples,
                &s1,
                &streams.child(i as u64),
                cfg.band,
            )?;
            for r in &rep.rows {
                push_est(&mut estimates, r);
                let a_se = if r.estimate > 0.0 {
                    r.a_n * r.se / r.estimate
                } else {
                    f64::NAN
                };
                band.push(row![i, r.n, r.a_n, a_se]);
            }
            for (n, ratio) in &rep.doubling {
                doubling.push(row![i, *n, *ratio]);
            }
            out.value(&format!("band_{i}_min"), rep.a_min);
            out.value(&format!("band_{i}_max"), rep.a_max);
            out.value(&format!("band_{i}_ratio"), rep.ratio);
            out.value(&format!("band_{i}_status"), rep.status.as_str());
            statuses.push(rep.status);
        }

        let mut variance = Table::new("variance", &["n", "i", "method", "estimate", "se", "rel_se", "N"]);
        if cfg.compare_n > 0 {
            let cmp = streams.child(1 << 32);
            for &i in &cfg.start_types {
                let d = survival_direct(
                    &model,
                    cfg.compare_n,
                    i,
                    cfg.compare_samples,
                    &cmp.child(2 * i as u64),
                    s1.lambda,
                )?;
                let t = survival_is(
                    &model,
                    cfg.compare_n,
                    i,
                    cfg.compare_samples,
                    &s1,
                    &cmp.child(2 * i as u64 + 1),
                )?;
                for e in [&d, &t] {
                    push_est(&mut estimates, e);
                    variance.push(row![
                        e.n,
                        e.start_type,
                        e.method.as_str(),
                        e.estimate,
                        e.se,
                        e.rel_se(),
                        e.samples
                    ]);
                }
                out.value(&format!("rel_se_ratio_{i}"), d.rel_se() / t.rel_se());
            }
        }

        out.tables.push(estimates);
        out.tables.push(band);
        out.tables.push(doubling);
        out.tables.push(variance);
        out.value("lambda_1", s1.lambda);
        Ok((combine(statuses), out))
    }

    fn mu_tail(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let (model, s1) = self.spectral1()?;
        let cfg = self.cfg.tilted.clone();
        let streams = self.streams(Stage::MuTail);
        let x = Direction::basis(model.dim(), cfg.start_type);
        let mut out = Output::default();

        let mut tail = Table::new("mu_tail", &["a", "n", "p_hat", "se", "scaled"]);
        let mut fitted = Table::new("fitted", &["a", "fitted_c", "flatness"]);
        let mut all_finite = true;
        for (j, &a) in cfg.a_list.iter().enumerate() {
            let t = mu_tail_estimate(
                &x,
                a,
                &cfg.mu_n_list,
                &model,
                &s1,
                cfg.mu_samples,
                &streams.child(j as u64),
            )?;
            for r in &t.rows {
                tail.push(row![a, r.n, r.p_hat, r.se, r.scaled]);
            }
            fitted.push(row![a, t.fitted_c, t.flatness]);
            all_finite &= t.fitted_c.is_finite() && t.fitted_c > 0.0;
        }

        let sigma = estimate_sigma(&model, &s1, cfg.sigma_n, cfg.sigma_samples, &streams.child(1 << 32))?;
        let mut st = Table::new(
            "sigma",
            &["n", "sigma", "se", "drift", "drift_se", "drift_ok", "degenerate"],
        );
        st.push(row![
            cfg.sigma_n,
            sigma.sigma,
            sigma.se,
            sigma.drift,
            sigma.drift_se,
            sigma.drift_ok,
            sigma.degenerate
        ]);

        out.tables.push(tail);
        out.tables.push(fitted);
        out.tables.push(st);
        out.value("sigma", sigma.sigma);
        out.value("fitted_c_finite", all_finite);
        let status = if sigma.degenerate || !all_finite {
            CheckStatus::Fail
        } else if !sigma.drift_ok {
            CheckStatus::Inconclusive
        } else {
            CheckStatus::Pass
        };
        Ok((status, out))
    }

    fn harmonic(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let table = self.harmonic_table()?;
        let p = self.working()?.dim();
        let mut out = Output::default();
        let mut columns: Vec<String> = vec!["node".into()];
        columns.extend((0..p).map(|k| format!("x{k}")));
        columns.extend(["a", "h", "se", "gap", "residual", "residual_se"].map(String::from));
        let mut t = Table::with_columns("harmonic", columns);
        for pt in table.points() {
            let mut r = row![pt.node];
            r.extend(pt.direction.iter().map(|v| (*v).into()));
            r.extend(row![pt.a, pt.h, pt.se, pt.gap, pt.residual, pt.residual_se]);
            t.push(r);
        }
        out.tables.push(t);

        let (r, c) = table.fitted();
        let harmonic = table.harmonic(3.0);
        let bounds = table.bounds_hold();
        out.value("fitted_r", r);
        out.value("fitted_c", c);
        out.value("offset", table.offset());
        out.value("horizon", table.horizon() as i64);
        out.value("harmonic_within_3se", harmonic);
        out.value("bounds_hold", bounds);
        Ok((pass_if(harmonic && bounds), out))
    }

    fn diagnostics(&mut self) -> std::result::Result<(CheckStatus, Output), LabError> {
        let (model, s1) = self.spectral1()?;
        let cfg = self.cfg.diagnostics.clone();
        let streams = self.streams(Stage::Diagnostics);
        let mut out = Output::default();

        let sw = proof_sweep(&model, cfg.sweep, &streams.child(0))?;
        let mut t = Table::new("sweep", &["check", "count", "value", "bound", "pass"]);
        t.push(row![
            "repres",
            sw.repres_count,
            sw.repres_max_rel_error,
            cfg.sweep.tolerance,
            sw.repres_pass
        ]);
        t.push(row!["psi", sw.psi_count, sw.psi_max_over_bound, 1.0, sw.psi_pass]);
        t.push(row!["psi_min", sw.psi_count, sw.psi_min, 0.0, sw.psi_min >= -1e-12]);
        t.push(row!["xi", sw.xi_count, sw.xi_pass_rate, 1.0, sw.xi_pass_rate == 1.0]);
        t.push(row![
            "xi_margin",
            sw.xi_count,
            sw.xi_min_margin,
            1.0,
            sw.xi_min_margin >= 1.0
        ]);
        t.push(row![
            "ratio",
            sw.xi_count,
            sw.ratio_pass_rate,
            1.0,
            sw.ratio_pass_rate == 1.0
        ]);
        t.push(row![
            "kers",
            sw.products_count,
            sw.kers_max_ratio,
            sw.kers_bound,
            sw.kers_pass
        ]);
        out.tables.push(t);

        let table = self.harmonic_table()?;
        let x = Direction::basis(model.dim(), self.cfg.tilted.start_type);
        let fh = fourheadd_partial(
            &model,
            &x,
            cfg.fourheadd_a,
            &cfg.fourheadd_n_list,
            &s1,
            &table,
            cfg.fourheadd_samples,
            &streams.child(1),
        )?;
        let mut t = Table::new("fourheadd", &["n", "partial", "se", "increment"]);
        for r in &fh.rows {
            t.push(row![r.n, r.partial, r.se, r.increment.unwrap_or(f64::NAN)]);
        }
        out.tables.push(t);

        out.value("sweep_pass", sw.pass());
        out.value("fourheadd_status", fh.status.as_str());
        Ok((combine([pass_if(sw.pass()), fh.status]), out))
    }
}

fn eigen_table(sol: &SpectralSolution) -> Table {
    let mut columns: Vec<String> = (0..sol.grid.params(0).len()).map(|k| format!("u{k}")).collect();
    columns.extend(["r", "l", "r_star", "l_star"].map(String::from));
    let mut t = Table::with_columns("eigen", columns);
    for j in 0..sol.grid.len() {
        let mut r: Vec<_> = sol.grid.params(j).iter().map(|v| (*v).into()).collect();
        r.extend(row![
            sol.r_values[j],
            sol.l_weights[j],
            sol.r_star_values[j],
            sol.l_star_weights[j]
        ]);
        t.push(r);
    }
    t
}
