//! `fedetf` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedetf_core::experiment::{
    find_resolved_config, inspect_checkpoint, load_config, partition_preview, run_experiment,
};
use fedetf_core::federation::SamplingList;
use fedetf_core::Result;

#[derive(Parser)]
#[command(name = "fedetf", version, about = "Federated learning simulator with a fixed simplex-ETF classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Write a client sampling list.
    GenSamplingList { clients: usize, rounds: usize, rate: f64, seed: u64, out: PathBuf },
    /// Report the parameter count (and β when a run config is found).
    InspectCheckpoint {
        path: PathBuf,
        /// Resolved config of the run; searched next to the checkpoint by default.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print per-client per-class sample counts of the configured partition.
    PartitionPreview { config: PathBuf },
}

fn run(config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    for s in run_experiment(&cfg)? {
        for w in &s.warnings {
            eprintln!("warning [{}]: {w}", s.algorithm);
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "{}: global accuracy {}, personalized accuracy {} -> {}",
            s.algorithm,
            fmt(s.final_global_acc),
            fmt(s.final_personalized_acc),
            s.dir.display()
        );
    }
    Ok(())
}

fn inspect(path: &Path, config: Option<PathBuf>) -> Result<()> {
    let config = config.or_else(|| find_resolved_config(path));
    let cfg = config.as_deref().map(load_config).transpose()?;
    let info = inspect_checkpoint(path, cfg.as_ref())?;
    println!("parameters: {}", info.params);
    match info.algorithm {
        Some(a) => println!("algorithm: {a}"),
        None if cfg.is_some() => println!("algorithm: unknown (no layout of the config matches)"),
        None => println!("algorithm: unknown (no resolved config found)"),
    }
    if let Some(beta) = info.beta {
        println!("beta: {beta}");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => run(&config),
        Command::GenSamplingList { clients, rounds, rate, seed, out } => {
            SamplingList::generate(clients, rounds, rate, seed)?.save(&out)
        }
        Command::InspectCheckpoint { path, config } => inspect(&path, config),
        Command::PartitionPreview { config } => {
            print!("{}", partition_preview(&load_config(&config)?)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
