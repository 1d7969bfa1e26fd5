//! Command-line experiments for the tendon-driven continuum robot
//! simulator. `tdcr --help` lists the commands; every run is configured by
//! a TOML file (all fields optional, defaults match the reference
//! prototype) plus a handful of override flags.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use tdcr_cli::config::ConfigFile;
use tdcr_cli::{commands, CliError};

#[derive(Parser)]
#[command(
    name = "tdcr",
    version,
    about = "Simulation and control experiments for tendon-driven continuum robots"
)]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for emitted CSV artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Override the simulated duration (s).
    #[arg(long, global = true, value_name = "S")]
    duration: Option<f64>,

    /// Override the tendon force saturation strategy.
    #[arg(long, global = true, value_parser = ["none", "clip", "shift", "redistribute"])]
    strategy: Option<String>,

    /// Override the integrator's relative tolerance.
    #[arg(long, global = true)]
    rtol: Option<f64>,

    /// Override the integrator's absolute tolerance.
    #[arg(long, global = true)]
    atol: Option<f64>,

    /// Override the seed of the randomized invariant checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-loop tracking experiment; write the trajectory log
    /// and a per-channel RMSE summary.
    Track,
    /// Run the experiment with energy logging; write the per-component
    /// energy trace.
    Energies,
    /// Write the total vs Coriolis generalized force magnitudes along the
    /// run.
    ForcesDiagnostic,
    /// Run clip and shift saturation on the same experiment and compare
    /// tracking RMSE.
    CompareSaturation,
    /// Run the library's invariant suite and print pass/fail per check.
    Validate,
}

// The subcommand sits after the global flags in the struct so clap accepts
// flags on either side of it.
#[derive(Parser)]
struct CliWithCommand {
    #[command(flatten)]
    common: Cli,
    #[command(subcommand)]
    command: Command,
}

fn load_config(cli: &Cli) -> Result<ConfigFile, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(d) = cli.duration {
        cfg.duration = d;
    }
    if let Some(s) = &cli.strategy {
        cfg.strategy = s.clone();
    }
    if let Some(r) = cli.rtol {
        cfg.rtol = r;
    }
    if let Some(a) = cli.atol {
        cfg.atol = a;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: CliWithCommand) -> Result<(), CliError> {
    let cfg = load_config(&cli.common)?;
    let out = &cli.common.out;
    if !matches!(cli.command, Command::Validate) {
        std::fs::create_dir_all(out).map_err(|e| {
            CliError::Config(format!("cannot create output dir '{}': {e}", out.display()))
        })?;
    }
    match cli.command {
        Command::Track => commands::track(&cfg, out),
        Command::Energies => commands::energies(&cfg, out),
        Command::ForcesDiagnostic => commands::forces_diagnostic(&cfg, out),
        Command::CompareSaturation => commands::compare_saturation(&cfg, out),
        Command::Validate => commands::validate(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TDCR_LOG")).init();
    let cli = CliWithCommand::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
