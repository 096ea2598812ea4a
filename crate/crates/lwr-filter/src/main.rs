use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lwr_filter::cli::{
    self, CliError, CompareConfig, FilterRunConfig, MixtureConfig, RunContext, SimulateConfig,
    load_config,
};

#[derive(Parser)]
#[command(name = "lwr-filter", version, about = "LWR traffic-flow solver and particle filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// JSON config file (or a manifest from an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config/manifest value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for per-particle work (0 = automatic). Results do
    /// not depend on this setting.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Refuse runs whose time step violates the CFL stability bound.
    #[arg(long)]
    strict_cfl: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic LWR run; writes the true trajectory CSV.
    Simulate(CommonFlags),
    /// Particle filter with online parameter learning.
    Filter(CommonFlags),
    /// Monte Carlo experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Sequential Bayes factor between two model configurations.
    CompareModels(CommonFlags),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Shock-speed mixture distribution experiment.
    Mixture(CommonFlags),
}

fn read_config(flags: &CommonFlags) -> Result<String, CliError> {
    match &flags.config {
        Some(path) => Ok(std::fs::read_to_string(path)?),
        None => Ok("{}".to_string()),
    }
}

/// Resolve flags against an optional manifest: explicit flags win, then
/// manifest values, then defaults.
fn context(
    flags: &CommonFlags,
    manifest_seed: Option<u64>,
    manifest_strict: Option<bool>,
) -> RunContext {
    RunContext {
        seed: flags.seed.or(manifest_seed).unwrap_or(0),
        strict_cfl: flags.strict_cfl || manifest_strict.unwrap_or(false),
        out_dir: flags.out.clone(),
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(flags) => {
            let raw = read_config(flags)?;
            let (config, manifest): (SimulateConfig, _) = load_config(&raw, "simulate")?;
            let ctx = context(
                flags,
                manifest.as_ref().map(|m| m.seed),
                manifest.as_ref().map(|m| m.strict_cfl),
            );
            cli::cmd_simulate(&config, &ctx)
        }
        Command::Filter(flags) => {
            let raw = read_config(flags)?;
            let (config, manifest): (FilterRunConfig, _) = load_config(&raw, "filter")?;
            let ctx = context(
                flags,
                manifest.as_ref().map(|m| m.seed),
                manifest.as_ref().map(|m| m.strict_cfl),
            );
            run_in_pool(flags.threads, || cli::cmd_filter(&config, &ctx))
        }
        Command::Experiment(ExperimentCommand::Mixture(flags)) => {
            let raw = read_config(flags)?;
            let (config, manifest): (MixtureConfig, _) = load_config(&raw, "experiment-mixture")?;
            let ctx = context(
                flags,
                manifest.as_ref().map(|m| m.seed),
                manifest.as_ref().map(|m| m.strict_cfl),
            );
            cli::cmd_experiment_mixture(&config, &ctx)
        }
        Command::CompareModels(flags) => {
            let raw = read_config(flags)?;
            let (config, manifest): (CompareConfig, _) = load_config(&raw, "compare-models")?;
            let ctx = context(
                flags,
                manifest.as_ref().map(|m| m.seed),
                manifest.as_ref().map(|m| m.strict_cfl),
            );
            run_in_pool(flags.threads, || cli::cmd_compare_models(&config, &ctx))
        }
    }
}

fn run_in_pool<F: FnOnce() -> Result<(), CliError> + Send>(
    threads: usize,
    f: F,
) -> Result<(), CliError> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(f)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
