//! `vortexwave`: command-line front end of the vortex-wave numerics library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod json;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use commands::{AnsatzMode, EqMode};

#[derive(Parser)]
#[command(
    name = "vortexwave",
    version,
    about = "Vortex-wave numerics for the generalized SQG equation"
)]
struct Cli {
    /// TOML configuration for the chosen command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel constant and the closed-form pair and polygon coefficients.
    Constants,
    /// Solve for the radial ground-state profile.
    Profile,
    /// Relative equilibria of point vortices.
    Equilibria {
        #[command(subcommand)]
        action: EqAction,
    },
    /// Diagnostics of the concentrated-vortex ansatz.
    Ansatz {
        #[command(subcommand)]
        action: AnsatzAction,
    },
    /// Time integration.
    Simulate {
        #[command(subcommand)]
        action: SimAction,
    },
}

#[derive(Subcommand)]
enum EqAction {
    /// Build a closed-form pair or polygon and report on it.
    Make,
    /// Report residuals of a given configuration.
    Verify,
    /// Newton search from a given configuration.
    Find,
}

#[derive(Subcommand)]
enum AnsatzAction {
    Lambdas,
    Scan,
    Reduced,
    Bracket,
}

#[derive(Subcommand)]
enum SimAction {
    /// Point vortices only.
    Points,
    /// Blob-discretized bump plus an opposite point vortex.
    Vortexwave,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Lib(vortexwave::Error),
}

impl From<vortexwave::Error> for CliError {
    fn from(e: vortexwave::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use vortexwave::Error::*;
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Lib(Domain(_)) => 2,
            CliError::Lib(Singularity(_)) => 3,
            CliError::Lib(NonConvergence { .. } | Quadrature(_)) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn load<T: DeserializeOwned>(path: Option<&Path>) -> Result<T, CliError> {
    let path = path.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = cli.config.as_deref();
    let out = cli.out.as_path();
    match &cli.command {
        Command::Constants => commands::constants(&load(cfg)?),
        Command::Profile => commands::profile(&load(cfg)?, out),
        Command::Equilibria { action } => {
            let mode = match action {
                EqAction::Make => EqMode::Make,
                EqAction::Verify => EqMode::Verify,
                EqAction::Find => EqMode::Find,
            };
            commands::equilibria(mode, &load(cfg)?, out)
        }
        Command::Ansatz { action } => match action {
            AnsatzAction::Lambdas => commands::ansatz(AnsatzMode::Lambdas, &load(cfg)?, out),
            AnsatzAction::Scan => commands::ansatz(AnsatzMode::Scan, &load(cfg)?, out),
            AnsatzAction::Reduced => commands::ansatz(AnsatzMode::Reduced, &load(cfg)?, out),
            AnsatzAction::Bracket => commands::bracket(&load(cfg)?, out),
        },
        Command::Simulate { action } => match action {
            SimAction::Points => commands::points(&load(cfg)?, out),
            SimAction::Vortexwave => commands::vortexwave(&load(cfg)?, out),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            println!("{}", json::to_string(&report));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
