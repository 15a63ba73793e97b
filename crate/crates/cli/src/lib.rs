//! Run orchestration for `bpre-lab`: config ingestion, stage pipelines and
//! content-addressed artifacts.
//!
//! A run lives in `<out>/runs/<digest prefix>/` and holds `config.toml` (the
//! resolved config), `manifest.toml`, and one directory of `.tsv` tables per
//! stage. Repeated invocations with the same config and seed share a run
//! directory and merge their stage records into the manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

use std::path::{Path, PathBuf};

use bpre_core::stats::CheckStatus;

pub use artifacts::{Manifest, StageRecord, Table};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use stages::{combine, Runner, Stage};

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "BPRE_LAB_OUT";
pub const DEFAULT_OUT: &str = "bpre-lab-out";
/// Length of the digest prefix naming a run directory.
pub const DIGEST_PREFIX: usize = 16;

#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    pub stage: Stage,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub status: CheckStatus,
}

pub fn exit_code(status: CheckStatus) -> i32 {
    match status {
        CheckStatus::Pass => 0,
        CheckStatus::Fail => 2,
        CheckStatus::Inconclusive => 3,
    }
}

fn output_root(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Loads the config, applies overrides, and runs the requested stage(s).
pub fn execute(inv: &Invocation) -> Result<RunOutcome> {
    let mut cfg = RunConfig::load(&inv.config)?;
    if let Some(seed) = inv.seed {
        cfg.seed = seed;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = inv.workers {
        if k == 0 {
            return Err(CliError::Workers("--workers must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| CliError::Workers(e.to_string()))?;
    let root = output_root(inv.out.as_deref(), &cfg);
    pool.install(|| run_config(cfg, &root, inv.stage))
}

/// Runs `stage` for an already-resolved config under `root`.
pub fn run_config(cfg: RunConfig, root: &Path, stage: Stage) -> Result<RunOutcome> {
    let digest = cfg.digest()?;
    let run_dir = root.join("runs").join(&digest[..DIGEST_PREFIX]);
    artifacts::save_config(&run_dir, &cfg.to_toml()?)?;
    let mut manifest = Manifest::load_or_new(&run_dir, &digest, cfg.seed)?;
    let stages: Vec<Stage> = if stage == Stage::All {
        Stage::PIPELINE.to_vec()
    } else {
        vec![stage]
    };
    let mut runner = Runner::new(cfg, &run_dir);
    let mut statuses = Vec::new();
    for s in stages {
        let record = runner.run(s)?;
        let status = record.status;
        manifest.stages.insert(s.name().to_string(), record);
        manifest.save(&run_dir)?;
        statuses.push(status);
        // later stages assume the hypotheses hold
        if s == Stage::Conditions && stage == Stage::All && status == CheckStatus::Fail {
            break;
        }
    }
    Ok(RunOutcome {
        run_dir,
        manifest,
        status: combine(statuses),
    })
}
