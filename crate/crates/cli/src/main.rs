use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cosec_core::batch::{run_to_dir, BatchOptions};
use cosec_core::config::{BatchConfig, Mode};

/// Copycat-attack RPL simulator. Log verbosity is taken from RUST_LOG.
#[derive(Parser)]
#[command(name = "cosec-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario variant and seed of a batch config.
    Run {
        /// Batch config file (TOML).
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, replacing the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Restrict to these modes (repeatable or comma-separated).
        #[arg(long, value_enum, value_delimiter = ',')]
        mode: Option<Vec<ModeArg>>,
        /// Also write one event trace per run under <out>/traces.
        #[arg(long)]
        trace: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Attack,
    Cosec,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Attack => Mode::Attack,
            ModeArg::Cosec => Mode::Cosec,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, seeds, mode, trace } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let cfg = BatchConfig::from_toml(&text).with_context(|| format!("in {}", config.display()))?;
            let opts = BatchOptions { seeds, modes: mode.map(|m| m.into_iter().map(Mode::from).collect()), trace };
            let cfg = opts.apply(&cfg).with_context(|| format!("in {}", config.display()))?;
            log::info!("{} variants x {} seeds", cfg.variants().len(), cfg.seeds().len());
            for path in run_to_dir(&cfg, &out, trace)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
