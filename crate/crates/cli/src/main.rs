mod config;
mod jobs;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, Mode};
use output::Writer;

#[derive(Parser)]
#[command(name = "mfentropy", version, about = "Mean-field entropy jobs driven by a TOML config")]
struct Cli {
    #[command(subcommand)]
    op: Op,
}

#[derive(Subcommand)]
enum Op {
    /// Execute the mode named in the config.
    Run(Flags),
    /// Run every cross-check and write verify.json.
    Verify(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to the config's `out`, then ".".
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use mfentropy::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<verify::ChecksFailed>().is_some() {
        return 4;
    }
    match err.downcast_ref::<E>() {
        Some(E::Infeasible(_)) => 2,
        Some(E::NonConvergence { .. } | E::Stall(_) | E::Partial { .. }) => 3,
        _ => 1,
    }
}

fn execute(op: Op) -> Result<()> {
    let (flags, force_verify) = match op {
        Op::Run(f) => (f, false),
        Op::Verify(f) => (f, true),
    };
    // Must precede any parallel work, including kernel assembly during load.
    let threads = flags.threads.unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let mut cfg = config::load(&flags.config)?;
    if let Some(seed) = flags.seed {
        cfg.set_seed(seed);
    }
    if force_verify {
        cfg.mode = Mode::Verify;
    }
    let dir = flags.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let mut w = Writer::new(dir, &cfg, rayon::current_num_threads())?;
    w.save_json("grid.json", "grid", &json!({ "grid": cfg.grid.spec(), "nodes": cfg.grid.len() }))?;
    jobs::run(&cfg, &mut w)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.op) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(c) = e.downcast_ref::<ConfigError>() {
                eprintln!("error: {c}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
