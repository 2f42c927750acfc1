use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fiberlab::config::ExperimentConfig;
use fiberlab::runner::{self, Outcome, Run};

#[derive(Parser)]
#[command(name = "fiberlab", version, about = "Collapsing-manifold estimate laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML); the warped-torus defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Random seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ignore and do not write the eigenpair cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the manifold and print a summary.
    Build,
    /// Compute low eigenpairs.
    Eig,
    /// Solve for the splitting map and certify it.
    Split,
    /// Integrate the fiber flow of an eigenmode.
    Flow,
    /// Run every estimate at the configured ε.
    Verify,
    /// Run every estimate across the configured ε list.
    Sweep,
}

fn execute(cli: &Cli) -> fiberlab::Result<Outcome> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::warped_default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.validate()?;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let mut run = Run::new(config, out, !cli.no_cache)?;
    let (name, outcome) = match cli.command {
        Command::Build => ("build", runner::cmd_build(&mut run)?),
        Command::Eig => ("eig", runner::cmd_eig(&mut run)?),
        Command::Split => ("split", runner::cmd_split(&mut run)?),
        Command::Flow => ("flow", runner::cmd_flow(&mut run)?),
        Command::Verify => ("verify", runner::cmd_verify(&mut run)?),
        Command::Sweep => ("sweep", runner::cmd_sweep(&mut run)?),
    };
    run.finish(name)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
