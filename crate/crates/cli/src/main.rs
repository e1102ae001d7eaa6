//! Command-line harness: codec benchmark, simulations, checks and reports.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "muacp", version, about = "Micro agent communication protocol toolkit")]
struct Cli {
    /// JSON configuration for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports; a manifest.json is written next to them.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed; overrides the configured seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// File with seeds (JSON array or whitespace separated); overrides the
    /// configured seeds.
    #[arg(long, global = true, conflicts_with = "seed")]
    seeds: Option<PathBuf>,
    /// Milliseconds per tick, used only to label reports.
    #[arg(long, env = "MUACP_TICK_MS", default_value_t = 1.0, global = true)]
    tick_ms: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time encode and decode over seeded random messages.
    BenchCodec {
        #[arg(long, default_value_t = 5000)]
        count: usize,
        /// empty, one-option or random.
        #[arg(long, default_value = "random")]
        mix: String,
    },
    /// Run a seeded single-decree consensus campaign.
    SimConsensus {
        /// Also write each run's event log.
        #[arg(long)]
        write_log: bool,
    },
    /// Run the request/response and contract-net load at several sizes.
    SimScale {
        #[arg(long)]
        write_log: bool,
    },
    /// Check that every protocol trace is realized by the four verbs.
    CheckTraces {
        protocol: PathBuf,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        /// Alternative translation table.
        #[arg(long)]
        tau: Option<PathBuf>,
    },
    /// Check the compression bound for a distribution or a simulation log.
    CheckBound {
        distribution: Option<PathBuf>,
        #[arg(long, conflicts_with = "distribution")]
        from_log: Option<PathBuf>,
    },
    /// Decode wire vectors and compare them with their sidecar expectations.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property(msg)) => {
            eprintln!("property failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
