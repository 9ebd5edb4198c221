use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperqst_cli::commands;
use hyperqst_cli::{CliError, ExperimentConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "hyperqst", version, about = "Single-measurement tomography of hyperentangled photons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Image and reconstruct one random state.
    Simulate,
    /// Fidelity against photon budget.
    SweepPhotons,
    /// Fidelity against the number of lifted spatial modes.
    SweepAncillas,
    /// Informational-completeness audit of the configured POVM.
    CheckIc,
    /// Intensity ambiguities with and without a coupler.
    Failcase,
    /// Two-photon intensity audit and coincidence round trip.
    BiphotonDemo,
    /// Write the configured Haar coupler to a matrix CSV.
    GenCoupler,
}

fn load(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(Some(cfg))
}

fn require(cfg: Option<ExperimentConfig>) -> Result<ExperimentConfig, CliError> {
    cfg.ok_or_else(|| CliError::Validation("this command needs --config".into()))
}

fn print<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
    println!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Simulate => print(&commands::simulate(&require(cfg)?, &out)?),
        Command::SweepPhotons => print(&commands::sweep_photons(&require(cfg)?, &out)?.points),
        Command::SweepAncillas => print(&commands::sweep_ancillas(&require(cfg)?, &out)?.points),
        Command::CheckIc => print(&commands::check_ic(&require(cfg)?, &out)?),
        Command::Failcase => print(&commands::failcase(seed, &out)?),
        Command::BiphotonDemo => {
            let cfg = cfg.unwrap_or_else(|| commands::biphoton_default_config(seed));
            print(&commands::biphoton_demo(&cfg, &out)?)
        }
        Command::GenCoupler => print(&commands::gen_coupler(&require(cfg)?, &out)?),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
