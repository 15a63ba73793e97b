//! Run configuration: a TOML file with one table per stage.
//!
//! Only `seed` and `[model]` are required; every other key has a default.

use std::path::{Path, PathBuf};

use bpre_core::diagnostics::{SweepSettings, REPRES_N_CAP};
use bpre_core::env::ModelSpec;
use bpre_core::spectral::SpectralSettings;
use bpre_core::survival::BandSettings;
use bpre_core::tilted::HarmonicSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, CliError, Result};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub conditions: ConditionsConfig,
    #[serde(default)]
    pub tilted: TiltedConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub resolution: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub h_theta: f64,
    pub richardson: bool,
    pub theta_grid: Vec<f64>,
    /// Scale the means so that Λ′(1) = 0 before the sampling stages.
    pub calibrate: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        let s = SpectralSettings::default();
        Self {
            resolution: s.resolution,
            tol: s.tol,
            max_iter: s.max_iter,
            h_theta: s.h_theta,
            richardson: s.richardson,
            theta_grid: (0..=16).map(|j| j as f64 * 0.125).collect(),
            calibrate: false,
        }
    }
}

impl SpectralConfig {
    pub fn settings(&self) -> SpectralSettings {
        SpectralSettings {
            resolution: self.resolution,
            tol: self.tol,
            max_iter: self.max_iter,
            h_theta: self.h_theta,
            richardson: self.richardson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsConfig {
    pub theta_probes: Vec<f64>,
    pub delta: f64,
    /// Random directions tested on top of the grid.
    pub budget: usize,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        Self {
            theta_probes: vec![0.5, 1.0, 2.0],
            delta: 0.05,
            budget: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TiltedConfig {
    /// Walks start from direction e_{start_type}.
    pub start_type: usize,
    pub a_list: Vec<f64>,
    pub mu_n_list: Vec<usize>,
    pub mu_samples: usize,
    pub sigma_n: usize,
    pub sigma_samples: usize,
    pub harmonic: HarmonicSettings,
}

impl Default for TiltedConfig {
    fn default() -> Self {
        Self {
            start_type: 0,
            a_list: vec![-LN_2, -2.0 * LN_2, -3.0 * LN_2],
            mu_n_list: vec![64, 128, 256, 512, 1024],
            mu_samples: 400_000,
            sigma_n: 200,
            sigma_samples: 20_000,
            harmonic: HarmonicSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub start_types: Vec<usize>,
    pub band: BandSettings,
    /// Exact enumeration rows for n = 1 … enum_max_n (0 disables).
    pub enum_max_n: usize,
    /// n for the direct-versus-tilted variance comparison (0 disables).
    pub compare_n: usize,
    pub compare_samples: usize,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            n_list: vec![10, 20, 40, 80, 160],
            samples: 200_000,
            start_types: vec![0],
            band: BandSettings::default(),
            enum_max_n: 12,
            compare_n: 40,
            compare_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub sweep: SweepSettings,
    pub fourheadd_a: f64,
    pub fourheadd_n_list: Vec<usize>,
    pub fourheadd_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            sweep: SweepSettings::default(),
            fourheadd_a: -LN_2,
            fourheadd_n_list: vec![64, 128, 256, 512],
            fourheadd_samples: 200_000,
        }
    }
}

fn increasing<T: PartialOrd + Copy>(path: &str, list: &[T], zero: T) -> Result<()> {
    if list.is_empty() {
        return config_err(path, "must not be empty");
    }
    if list[0] <= zero {
        return config_err(path, "entries must be positive");
    }
    if list.windows(2).any(|w| w[1] <= w[0]) {
        return config_err(path, "must be strictly increasing");
    }
    Ok(())
}

fn positive(path: &str, n: usize) -> Result<()> {
    if n == 0 {
        return config_err(path, "must be positive");
    }
    Ok(())
}

fn positive_f(path: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return config_err(path, format!("must be a positive finite number, got {x}"));
    }
    Ok(())
}

impl RunConfig {
    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
            path: "<document>".into(),
            message: e.message().to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.scenarios.is_empty() {
            return config_err("model.scenarios", "at least one scenario is required");
        }
        let points = self.model.points().map_err(|e| CliError::Config {
            path: "model.scenarios".into(),
            message: e.to_string(),
        })?;
        let p = points[0].1.dim();
        if let Some(k) = points.iter().position(|(_, pt)| pt.dim() != p) {
            return config_err(
                format!("model.scenarios[{k}]"),
                "all scenarios must have the same number of types",
            );
        }
        positive_f("model.declared_delta", self.model.declared_delta)?;

        let s = &self.spectral;
        positive_f("spectral.tol", s.tol)?;
        positive("spectral.max_iter", s.max_iter)?;
        positive_f("spectral.h_theta", s.h_theta)?;
        if let Some(r) = s.resolution {
            positive("spectral.resolution", r)?;
        }
        if s.theta_grid.is_empty() || s.theta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return config_err("spectral.theta_grid", "must be nonempty and strictly increasing");
        }

        let c = &self.conditions;
        if c.theta_probes.is_empty() || c.theta_probes.iter().any(|t| !(*t > 0.0)) {
            return config_err("conditions.theta_probes", "must be nonempty with positive entries");
        }
        positive_f("conditions.delta", c.delta)?;

        let t = &self.tilted;
        if t.start_type >= p {
            return config_err("tilted.start_type", format!("must be below p = {p}"));
        }
        if t.a_list.is_empty() || t.a_list.iter().any(|a| !(*a < 0.0) || !a.is_finite()) {
            return config_err("tilted.a_list", "must be nonempty with negative finite levels");
        }
        increasing("tilted.mu_n_list", &t.mu_n_list, 0)?;
        positive("tilted.mu_samples", t.mu_samples)?;
        positive("tilted.sigma_n", t.sigma_n)?;
        if t.sigma_samples < 2 {
            return config_err("tilted.sigma_samples", "must be at least 2");
        }
        positive_f("tilted.harmonic.delta_a", t.harmonic.delta_a)?;
        positive("tilted.harmonic.levels", t.harmonic.levels)?;
        positive("tilted.harmonic.samples", t.harmonic.samples)?;
        if t.harmonic.horizon < 4 {
            return config_err("tilted.harmonic.horizon", "must be at least 4");
        }
        if p > 1 {
            positive("tilted.harmonic.resolution", t.harmonic.resolution)?;
        }

        let v = &self.survival;
        increasing("survival.n_list", &v.n_list, 0)?;
        if v.samples < 100 {
            return config_err("survival.samples", "must be at least 100");
        }
        if v.start_types.is_empty() {
            return config_err("survival.start_types", "must not be empty");
        }
        if let Some(j) = v.start_types.iter().position(|i| *i >= p) {
            return config_err(format!("survival.start_types[{j}]"), format!("must be below p = {p}"));
        }
        if v.compare_n > 0 && v.compare_samples < 100 {
            return config_err("survival.compare_samples", "must be at least 100");
        }

        let d = &self.diagnostics;
        let sw = &d.sweep;
        if sw.n_max == 0 || sw.n_max > REPRES_N_CAP {
            return config_err("diagnostics.sweep.n_max", format!("must lie in 1..={REPRES_N_CAP}"));
        }
        if sw.xi_n == 0 || sw.xi_n > REPRES_N_CAP {
            return config_err("diagnostics.sweep.xi_n", format!("must lie in 1..={REPRES_N_CAP}"));
        }
        positive("diagnostics.sweep.product_n", sw.product_n)?;
        positive_f("diagnostics.sweep.tolerance", sw.tolerance)?;
        if !(d.fourheadd_a < 0.0) {
            return config_err("diagnostics.fourheadd_a", "must be negative");
        }
        increasing("diagnostics.fourheadd_n_list", &d.fourheadd_n_list, 0)?;
        if d.fourheadd_samples < 2 {
            return config_err("diagnostics.fourheadd_samples", "must be at least 2");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys), excluding the output
    /// directory.
    pub fn digest(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| CliError::Encode {
            what: "config",
            message: e.to_string(),
        })?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        let text = serde_json::to_string(&value).map_err(|e| CliError::Encode {
            what: "config",
            message: e.to_string(),
        })?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Encode {
            what: "config",
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[model]
declared_delta = 2.0

[[model.scenarios]]
family = "poisson-product"
weight = 0.8
means = [[0.5]]

[[model.scenarios]]
family = "poisson-product"
weight = 0.2
means = [[2.0]]
"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.survival.n_list, vec![10, 20, 40, 80, 160]);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = format!("{MINIMAL}\n[survival]\nsamplez = 5\n");
        match RunConfig::parse(&text) {
            Err(CliError::Config { path, .. }) => assert!(path.starts_with("survival"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_increasing_list_is_rejected() {
        let text = format!("{MINIMAL}\n[survival]\nn_list = [10, 10]\n");
        match RunConfig::parse(&text) {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "survival.n_list"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = MINIMAL.replace("seed = 7", "");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config { .. })));
    }

    #[test]
    fn digest_ignores_key_order_and_output_dir() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let reordered = MINIMAL.replace(
            "family = \"poisson-product\"\nweight = 0.8",
            "weight = 0.8\nfamily = \"poisson-product\"",
        );
        let mut b = RunConfig::parse(&reordered).unwrap();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.seed = 8;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }

    #[test]
    fn round_trips_through_toml() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
