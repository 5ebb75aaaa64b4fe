//! Experiment runner behind the `trajopt` binary.
//!
//! Exit codes: 0 success, 1 verification failure or solver error, 2 bad
//! configuration, 3 I/O failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("solver error: {0}")]
    Solver(trajopt::Error),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Solver(_) | CliError::VerifyFailed(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<trajopt::Error> for CliError {
    fn from(e: trajopt::Error) -> Self {
        match e {
            trajopt::Error::InvalidParameter(msg) => CliError::Config(msg),
            other => CliError::Solver(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "trajopt",
    version,
    about = "iLQR, Newton-LQR and DDP experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve once per method and write iterations, Quu profile, trajectory and summary.
    Run(CommonArgs),
    /// Run several methods from the same guess and merge their traces.
    Compare(CommonArgs),
    /// Check derivatives and backward-pass/KKT equivalence on both benchmarks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key = value file; see the README for the keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub system: Option<String>,
    /// ilqr, newton, ddp, hybrid, a comma list, or all.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding TRAJOPT_OUT and the config file.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Perturbs one entry of every reported f_x so the derivative check must fail.
    #[arg(long, hide = true)]
    pub inject_jacobian_fault: bool,
}

impl CommonArgs {
    /// Layers defaults, file, `env_out`, `--set` and dedicated flags.
    pub fn resolve(&self, env_out: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            config.apply_file(&text)?;
        }
        if let Some(out) = env_out.filter(|s| !s.is_empty()) {
            config.out = PathBuf::from(out);
        }
        for pair in &self.set {
            config.set_pair(pair)?;
        }
        if let Some(system) = &self.system {
            config.set("system", system)?;
        }
        if let Some(method) = &self.method {
            config.set("method", method)?;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, env_out: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Run(args) => args.resolve(env_out).and_then(|c| commands::cmd_run(&c)),
        Command::Compare(args) => args
            .resolve(env_out)
            .and_then(|c| commands::cmd_compare(&c)),
        Command::Verify(args) => args
            .common
            .resolve(env_out)
            .and_then(|c| commands::cmd_verify(&c, args.inject_jacobian_fault)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("trajopt: {e}");
            e.exit_code()
        }
    }
}
