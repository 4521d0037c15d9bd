use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

mod cmd;
mod config;
mod data;

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "qbmvae",
    version,
    about = "Boltzmann-prior VAE for single-cell data, with Ising samplers"
)]
struct Cli {
    /// Flat key=value file supplying flag values; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write a checkpoint and per-epoch history.
    #[command(args_override_self = true)]
    Train(cmd::train::TrainArgs),
    /// Embed a dataset with a checkpoint and score the embedding.
    #[command(args_override_self = true)]
    Eval(cmd::eval::EvalArgs),
    /// Solve max-cut on Möbius ladders with simulated annealing.
    #[command(args_override_self = true)]
    Maxcut(cmd::maxcut::MaxcutArgs),
    /// Compare a sampler against exact enumeration on a random machine.
    #[command(name = "validate-sampler", args_override_self = true)]
    ValidateSampler(cmd::validate::ValidateArgs),
    /// Repeated annealing batches over time on a fixed instance.
    #[command(args_override_self = true)]
    Stability(cmd::stability::StabilityArgs),
    /// Run the sampling service.
    #[command(args_override_self = true)]
    Serve(cmd::serve::ServeArgs),
    /// Write a synthetic count dataset.
    #[command(args_override_self = true)]
    Synth(cmd::synth::SynthArgs),
}

/// Output directory shared by every file-writing subcommand.
#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Directory for outputs; created if missing.
    #[arg(long, default_value = "qbmvae_out")]
    pub out: PathBuf,
}

impl OutArgs {
    pub fn prepare(&self) -> CliResult<&PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

/// Annealing schedule flags.
#[derive(Args, Debug, Clone)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 10.0)]
    pub t_start: f64,
    #[arg(long, default_value_t = 0.05)]
    pub t_end: f64,
    /// Sweeps per run; defaults to 50 per spin.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value = "geometric")]
    pub shape: String,
}

impl ScheduleArgs {
    pub fn schedule(&self, n: usize) -> CliResult<qbmvae::samplers::AnnealSchedule> {
        let s = qbmvae::samplers::AnnealSchedule {
            t_start: self.t_start,
            t_end: self.t_end,
            n_steps: self.steps.unwrap_or(50 * n.max(1)),
            shape: self
                .shape
                .parse()
                .map_err(|e: qbmvae::Error| CliError::Usage(e.to_string()))?,
        };
        s.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(s)
    }
}

/// Gibbs flags.
#[derive(Args, Debug, Clone)]
pub struct GibbsArgs {
    /// Sweeps between kept samples.
    #[arg(long, default_value_t = 1)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

impl GibbsArgs {
    pub fn config(&self, n_samples: usize) -> CliResult<qbmvae::samplers::GibbsConfig> {
        let c = qbmvae::samplers::GibbsConfig {
            n_samples,
            n_sweeps: self.sweeps,
            burn_in: self.burn_in,
            temperature: self.temperature,
            n_chains: self.chains,
        };
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }
}

fn run(args: Vec<OsString>) -> CliResult<()> {
    let command = Cli::command();
    let args = config::merge_config(&command, args)?;
    let matches = match command.clone().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            // Help and version print and exit 0; real usage errors exit 2.
            let _ = e.print();
            if e.use_stderr() {
                return Err(CliError::Usage(String::new()));
            }
            return Ok(());
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let (name, sub_matches) = matches.subcommand().expect("a subcommand is required");
    let sub = command.find_subcommand(name).expect("parsed subcommand exists");
    let flags = config::resolved_flags(sub, sub_matches);
    match cli.command {
        Command::Train(a) => cmd::train::run(&a, &flags),
        Command::Eval(a) => cmd::eval::run(&a, &flags),
        Command::Maxcut(a) => cmd::maxcut::run(&a, &flags),
        Command::ValidateSampler(a) => cmd::validate::run(&a, &flags),
        Command::Stability(a) => cmd::stability::run(&a, &flags),
        Command::Serve(a) => cmd::serve::run(&a, &flags),
        Command::Synth(a) => cmd::synth::run(&a, &flags),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
