//! `gridsec`: experiment runner emitting CSV.

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{ExperimentConfig, RawConfig};

#[derive(Parser, Debug)]
#[command(name = "gridsec", version, about = "Data-injection attack experiments on DC power grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mutual information and detection probability of the optimal stealth attack over λ.
    StealthSweep(Common),
    /// Detection upper bound against simulated detection over λ.
    PdBound(Common),
    /// Closed-form deterministic attacks for `d0` or `l0_prime`.
    Detattack(Common),
    /// Best-response dynamics among decentralized attackers.
    Brd(Common),
    /// Ergodic cost of attacks learned from training data and its upper bound.
    Ergodic(Common),
    /// Measurement Jacobian of a case.
    Jacobian(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Case file, or a bundled case name.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::StealthSweep(c) => ("stealth-sweep", c),
            Command::PdBound(c) => ("pd-bound", c),
            Command::Detattack(c) => ("detattack", c),
            Command::Brd(c) => ("brd", c),
            Command::Ergodic(c) => ("ergodic", c),
            Command::Jacobian(c) => ("jacobian", c),
        }
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut raw = RawConfig::load(&common.config)?;
    if let Some(v) = &common.case {
        raw.set("case_path", v);
    }
    if let Some(v) = common.rho {
        raw.set("rho", v);
    }
    if let Some(v) = common.snr_db {
        raw.set("snr_db", v);
    }
    if let Some(v) = common.tau {
        raw.set("tau", v);
    }
    if let Some(v) = common.seed {
        raw.set("seed", v);
    }
    if let Some(v) = &common.out {
        raw.set("output_dir", v.display());
    }
    Ok(ExperimentConfig::resolve(&raw)?)
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let (name, common) = cli.command.parts();
    let cfg = resolve(common)?;
    let table = match cli.command {
        Command::StealthSweep(_) => commands::stealth_sweep(&cfg)?,
        Command::PdBound(_) => commands::pd_bound(&cfg)?,
        Command::Detattack(_) => commands::detattack(&cfg)?,
        Command::Brd(_) => commands::brd(&cfg)?,
        Command::Ergodic(_) => commands::ergodic(&cfg)?,
        Command::Jacobian(_) => commands::jacobian(&cfg)?,
    };
    table
        .write(&cfg.output_dir, name, &cfg.hash(), cfg.seed)
        .map_err(CliError::Output)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(path) => {
            eprintln!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
