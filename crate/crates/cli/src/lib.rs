//! Experiment runner for `rankflow`.
//!
//! The binary is a thin wrapper around [`run`]: it parses the command line,
//! sizes the worker pool from `RANKFLOW_THREADS`, and turns a [`CliError`]
//! into a JSON object on standard error plus the matching exit code.

pub mod acceptance;
pub mod artifact;
pub mod commands;
pub mod config;
pub mod engine;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::ReproTarget;
pub use config::{parse_config, ExperimentConfig, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rankflow", version, about = "Competing Brownian particles: rates, simulation, verification")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, replaces `sim.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, replaces `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of replicas, replaces `sim.replicas`.
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Time step, replaces `sim.dt`.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Do not print results to standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// (a, b)-family rates with residuals, window rates and finite-system rates.
    Rates {
        /// Drifts g_1,...,g_N of a finite system; prints its stationary rates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        finite: Option<Vec<f64>>,
    },
    /// Parameters (a, b) for which every rate is positive.
    SigmaRegion,
    /// Limits of window rates along an approximative window sequence.
    LambdaLimit,
    /// Runs the configured engine and stores the trajectories.
    Simulate,
    /// Tests recorded gaps against the product-form stationary rates.
    VerifyStationarity,
    /// Tests stochastic order of a gap between nested windows.
    VerifyDomination,
    /// Tests that the mean of a gap decreases over time.
    VerifyDecay,
    /// Reproduces a worked example or runs the acceptance suite.
    Repro {
        #[arg(value_enum)]
        target: ReproTarget,
    },
}

/// Executes a parsed command line, printing results to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.seed,
        replicas: cli.replicas,
        dt: cli.dt,
        out: cli.out.as_ref().map(|p| p.display().to_string()),
    };
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg = parse_config(&text)?;
            cfg.apply(&overrides);
            cfg.validate()?;
            Some(cfg)
        }
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.dir.clone()).map(PathBuf::from));
    let mut ctx = commands::Context {
        config,
        out,
        seed_override: cli.seed,
        quiet: cli.quiet,
        stdout,
    };
    match cli.command {
        Command::Rates { finite } => commands::rates(&mut ctx, finite),
        Command::SigmaRegion => commands::sigma(&mut ctx),
        Command::LambdaLimit => commands::limit(&mut ctx),
        Command::Simulate => commands::simulate(&mut ctx),
        Command::VerifyStationarity => commands::verify_stationarity(&mut ctx),
        Command::VerifyDomination => commands::verify_domination(&mut ctx),
        Command::VerifyDecay => commands::verify_decay(&mut ctx),
        Command::Repro { target } => commands::repro(&mut ctx, target),
    }
}

/// Sizes the global worker pool from `RANKFLOW_THREADS` when it is set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("RANKFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Precondition(format!("RANKFLOW_THREADS = {value:?} is not a positive integer"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Precondition(format!("cannot size the worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (Result<(), CliError>, String) {
        let cli = Cli::try_parse_from(std::iter::once("rankflow").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let r = run(cli, &mut buf);
        (r, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn finite_rates_from_the_command_line() {
        let (r, out) = run_args(&["rates", "--finite", "1,0"]);
        r.unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[0].starts_with("# config_sha256="));
        assert_eq!(&lines[1..], ["index,rate", "1,1.0"]);
    }

    #[test]
    fn negative_drifts_parse_and_instability_is_a_precondition_error() {
        let (r, _) = run_args(&["rates", "--finite", "-1,0"]);
        assert_eq!(r.unwrap_err().exit_code(), 3);
    }

    #[test]
    fn quiet_suppresses_output() {
        let (r, out) = run_args(&["--quiet", "rates", "--finite", "2,1,0"]);
        r.unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn commands_needing_a_config_say_so() {
        let (r, _) = run_args(&["sigma-region"]);
        assert_eq!(r.unwrap_err().exit_code(), 3);
    }
}
