use std::path::PathBuf;
use std::process::ExitCode;

use bpre_lab::{execute, exit_code, Invocation, Stage};
use clap::Parser;

/// Numerical laboratory for critical branching processes in random environment.
#[derive(Debug, Parser)]
#[command(name = "bpre-lab", version)]
struct Args {
    /// Stage to run; `all` runs every stage in order.
    #[arg(value_enum)]
    stage: Stage,

    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output root; overrides BPRE_LAB_OUT and `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Caps the number of worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        config: args.config,
        stage: args.stage,
        seed: args.seed,
        out: args.out,
        workers: args.workers,
    };
    match execute(&inv) {
        Ok(outcome) => {
            for (name, rec) in &outcome.manifest.stages {
                println!("{name}\t{}\t{:.2}s", rec.status.as_str(), rec.wall_seconds);
            }
            println!("run directory: {}", outcome.run_dir.display());
            ExitCode::from(exit_code(outcome.status) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
