//! `stcomp` command-line harness: single runs, parameter sweeps, built-in
//! reproduction presets and compressor certification.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{ConfigError, Status};

#[derive(Parser)]
#[command(
    name = "stcomp",
    version,
    about = "Compressed distributed optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config, or the preset it names.
    Run(RunArgs),
    /// Empirically certify a compressor.
    Certify(CertifyArgs),
    /// Run a built-in reproduction preset.
    Preset(PresetArgs),
    /// Run a base config under a list of JSON merge patches in parallel.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct Overrides {
    /// Experiment seed (objective, initial state, random graph).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir` or `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accept nonlinear compressors in direct-compression algorithms.
    #[arg(long)]
    pub allow_unverified_delta: bool,
    #[arg(long)]
    pub max_rounds: Option<u64>,
    /// Target suboptimality.
    #[arg(long)]
    pub accuracy: Option<f64>,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args)]
pub struct CertifyArgs {
    /// File holding a compressor block or an experiment config with one.
    #[arg(
        long,
        conflicts_with = "compressor",
        required_unless_present = "compressor"
    )]
    pub config: Option<PathBuf>,
    /// Inline compressor block, for example `{"kind":"topk","k":2}`.
    #[arg(long)]
    pub compressor: Option<String>,
    /// Dimension d; defaults to the config's dimension or 5.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Step of the induced recursion; defaults to the certified value.
    #[arg(long)]
    pub kappa0: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 500)]
    pub horizon: usize,
    /// Also check the contraction inequality.
    #[arg(long)]
    pub contraction: bool,
    /// Samples for the contraction and commutation checks.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Contraction `p`; defaults to the kind's declared value.
    #[arg(long, requires = "phi")]
    pub p: Option<f64>,
    #[arg(long, requires = "p")]
    pub phi: Option<f64>,
    /// Window length T1 for the excitation bounds of a scalarization schedule.
    #[arg(long)]
    pub pe_window: Option<usize>,
    /// Last window start checked for the excitation bounds.
    #[arg(long, default_value_t = 1000)]
    pub pe_horizon: u64,
    /// Also estimate the commutation bound on the config's graph or a ring.
    #[arg(long)]
    pub delta: bool,
    /// Ring size used by `--delta` when no graph is configured.
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    /// Seed of the certification samples.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PresetName {
    Table1,
    ConvexRosenbrock,
    CompressorVerify,
}

#[derive(Args)]
pub struct PresetArgs {
    #[arg(value_enum)]
    pub name: PresetName,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// JSON array of merge patches, one per run.
    #[arg(long)]
    pub variants: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || e.downcast_ref::<stcomp::Error>()
                .is_some_and(stcomp::Error::is_config)
    });
    if config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STCOMP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => commands::run(&args),
        Command::Certify(args) => commands::certify(&args),
        Command::Preset(args) => commands::preset(&args),
        Command::Sweep(args) => commands::sweep(&args),
    };
    match result {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
