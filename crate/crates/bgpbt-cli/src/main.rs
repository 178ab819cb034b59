//! Command-line interface: run configured experiments, compare method
//! variants on paired seeds, reduce finished runs to schedule plot data,
//! and validate config files.
//!
//! Exit codes: 0 on success, 2 for configuration problems (the message
//! names the offending field), 3 for runtime failures (partial artifacts
//! are kept).

mod compare;
mod config;
mod runner;
mod schedule_data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "bgpbt",
    version,
    about = "Population-based training driven by a time-aware surrogate over mixed spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment for every seed and write artifacts.
    Run(ExperimentArgs),
    /// Run four method variants on paired seeds and tabulate best returns.
    Compare(ExperimentArgs),
    /// Reduce a finished run directory to per-dimension schedule statistics.
    ScheduleData(ScheduleDataArgs),
    /// Check a config file and print the resolved experiment.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed for the run; repeat for several. Overrides the config's list.
    #[arg(long = "seed", value_name = "INT")]
    seed: Vec<u64>,
    /// Output directory. Defaults to the config's `out` under $BGPBT_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path config override, e.g. `scheduler.population=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ScheduleDataArgs {
    /// Run directory written by `run` (contains config.toml and seed-*).
    run_dir: PathBuf,
    /// Output directory; defaults to `<run_dir>/schedule-data`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict output to this dimension; repeat for several.
    #[arg(long = "dim", value_name = "NAME")]
    dim: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path config override, applied before validation.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also print the objective's canonical space as TOML.
    #[arg(long)]
    print_space: bool,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = ExperimentConfig::load(&args.config, &args.set)?;
            let seeds = cfg.resolved_seeds(&args.seed)?;
            let out = cfg.resolve_out(args.out.as_deref());
            cfg.scheduler_config()
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            runner::cmd_run(&cfg, &seeds, &out, args.jobs)
        }
        Command::Compare(args) => {
            let cfg = ExperimentConfig::load(&args.config, &args.set)?;
            let seeds = cfg.resolved_seeds(&args.seed)?;
            let out = cfg.resolve_out(args.out.as_deref());
            cfg.scheduler_config()
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            compare::cmd_compare(&cfg, &seeds, &out, args.jobs)
        }
        Command::ScheduleData(args) => {
            schedule_data::cmd_schedule_data(&args.run_dir, args.out.as_deref(), &args.dim)
        }
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&args.config, &args.set)?;
    let objective = cfg.build_objective()?;
    cfg.scheduler_config()
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let round_tripped = ExperimentConfig::from_toml_with_overrides(&cfg.to_toml_string(), &[])?;
    if round_tripped != cfg {
        return Err(CliError::Runtime(
            "config did not survive a serialize/parse round trip".to_string(),
        ));
    }
    let space = objective.space();
    let seeds = match &cfg.seeds {
        Some(s) => format!("{s:?}"),
        None => "(from --seed)".to_string(),
    };
    println!(
        "ok: objective `{}` over {} dims ({} continuous-like, {} categorical), \
         population {}, t_max {} units, seeds {}",
        cfg.objective.kind_name(),
        space.n_dims(),
        space.n_x(),
        space.n_h(),
        cfg.scheduler.population,
        cfg.scheduler.t_max_units,
        seeds
    );
    if args.print_space {
        print!("{}", space.to_toml_string());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
