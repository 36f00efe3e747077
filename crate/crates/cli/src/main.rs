//! Command-line driver. Exit codes: 0 run reached completed or blewup,
//! 1 configuration error, 2 numerical failure, 3 convergence-order failure.

mod config;
mod pipeline;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pipeline::RunScope;

#[derive(Parser)]
#[command(
    name = "viscowave",
    version,
    about = "Radial viscoelastic wave laboratory: energy decay envelopes and blow-up bounds"
)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the optimizer seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment end to end and write every artifact.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute the potential-well constants and the minimizing profile.
    WellDepth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classify the initial data against the potential well.
    Classify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run to completion and write the decay-envelope report.
    DecayReport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run to blow-up and write the blow-up bound report.
    BlowupReport {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Manufactured-solution convergence check on two nested meshes.
    Mms {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Cartesian parameter sweep: one run directory per grid point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let result = match &cli.cmd {
        Cmd::Simulate { config, out_dir } => {
            pipeline::cmd_run(config, out_dir, cli.seed, RunScope::Full)
        }
        Cmd::WellDepth { config, out_dir } => pipeline::cmd_well_depth(config, out_dir, cli.seed),
        Cmd::Classify { config, out_dir } => pipeline::cmd_classify(config, out_dir, cli.seed),
        Cmd::DecayReport { config, out_dir } => {
            pipeline::cmd_run(config, out_dir, cli.seed, RunScope::DecayOnly)
        }
        Cmd::BlowupReport { config, out_dir } => {
            pipeline::cmd_run(config, out_dir, cli.seed, RunScope::BlowupOnly)
        }
        Cmd::Mms { config, out_dir } => pipeline::cmd_mms(config, out_dir.as_deref()),
        Cmd::Sweep { config, out_dir } => sweep::cmd_sweep(config, out_dir, cli.seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
