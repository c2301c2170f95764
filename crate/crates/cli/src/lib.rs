//! Command-line front end: configuration loading, the subcommands and plotting.

pub mod commands;
pub mod config;
pub mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Common, PlanStrategy, Suite, UsageError, VerifyOptions};
use config::{Config, ConfigError};
use platoon::horizon::Sigma;

/// Exit code of a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit code of a violated check or a runtime failure.
pub const EXIT_FAILURE: i32 = 1;
/// Exit code of a usage or configuration error.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "platoon", version, about = "Horizon bounds, maneuvers and MPC for mixed platoons")]
pub struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampled scenarios and suites (overrides experiment.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Number of samples for verification suites (overrides experiment.samples).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Horizon blend weight in [0, 1] (overrides horizon.lambda).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Spacing margin in metres, or `derived` (overrides sigma).
    #[arg(long, global = true)]
    pub sigma: Option<String>,
    /// Terminal tolerance for spacing and speed (overrides experiment.tol).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Safety-distance speed coefficient (overrides global.delta1).
    #[arg(long, global = true)]
    pub delta1: Option<f64>,
    /// Safety-distance closing-speed coefficient (overrides global.delta2).
    #[arg(long, global = true)]
    pub delta2: Option<f64>,
    /// Number of CAVs in sampled platoons (overrides scenario.n).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-vehicle and platoon horizon bounds for a scenario.
    #[command(alias = "horizon")]
    Bounds,
    /// Roll out a maneuver strategy and write its trace.
    Plan {
        #[arg(long, value_enum, default_value = "blended")]
        strategy: PlanStrategy,
    },
    /// Closed-loop receding-horizon run.
    Mpc {
        /// Simulated steps; defaults to experiment.run_factor times the horizon.
        #[arg(long)]
        steps: Option<usize>,
        /// Drop the terminal constraint.
        #[arg(long)]
        no_terminal: bool,
    },
    /// Run a verification suite; exits 1 when it records a violation.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        /// Rollout length for the interval suite.
        #[arg(long)]
        steps: Option<usize>,
        /// Comma-separated blend weights for the platoon suite.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Draw positions, speeds, controls and tracking errors from a trace CSV.
    Plot {
        /// Trace written by `plan` or `mpc`.
        trace: PathBuf,
    },
}

fn parse_sigma(text: &str) -> Result<Sigma, String> {
    if text == "derived" {
        return Ok(Sigma::DERIVED);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Sigma::Fixed(v)),
        _ => Err(format!("expected a number or `derived`, got `{text}`")),
    }
}

/// Loads the configuration and folds the command-line overrides into it.
pub fn resolve(cli: &Cli) -> Result<Config, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let flag = |key: &str, message: String| ConfigError { path: "command line".into(), key: Some(key.into()), line: None, column: None, message };
    if let Some(s) = cli.seed {
        config.experiment.seed = s;
    }
    if let Some(s) = cli.samples {
        config.experiment.samples = s;
    }
    if let Some(l) = cli.lambda {
        config.horizon.lambda = l;
    }
    if let Some(s) = &cli.sigma {
        config.sigma = parse_sigma(s).map_err(|m| flag("--sigma", m))?;
    }
    if let Some(t) = cli.tol {
        config.experiment.tol.spacing = t;
        config.experiment.tol.speed = t;
    }
    if let Some(d) = cli.delta1 {
        config.global.delta1 = d;
    }
    if let Some(d) = cli.delta2 {
        config.global.delta2 = d;
    }
    if let Some(n) = cli.n {
        config.scenario.n = n;
    }
    config.validate().map_err(|(key, message)| flag(&key, message))?;
    Ok(config)
}

fn usage_error(error: &str, message: String, key: Option<String>) -> i32 {
    let doc = json!({ "error": error, "message": message, "key": key, "exit_code": EXIT_USAGE });
    eprintln!("{doc}");
    EXIT_USAGE
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return usage_error("config", e.to_string(), e.key.clone()),
    };
    if cli.print_config {
        print!("{}", config.to_toml());
        return EXIT_OK;
    }
    let common = Common { seed: config.experiment.seed, config, out: cli.out.clone() };
    let result = match &cli.command {
        Command::Bounds => commands::cmd_bounds(&common),
        Command::Plan { strategy } => commands::cmd_plan(&common, *strategy),
        Command::Mpc { steps, no_terminal } => commands::cmd_mpc(&common, *steps, *no_terminal),
        Command::Verify { suite, steps, lambdas } => {
            let opts = VerifyOptions { steps: *steps, lambdas: lambdas.clone(), n: cli.n };
            commands::cmd_verify(&common, *suite, &opts)
        }
        Command::Plot { trace } => commands::cmd_plot(&common, trace),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) if e.is::<UsageError>() => usage_error("usage", format!("{e:#}"), None),
        Err(e) => {
            eprintln!("{}", json!({ "error": "runtime", "message": format!("{e:#}"), "exit_code": EXIT_FAILURE }));
            EXIT_FAILURE
        }
    }
}
