//! Pipeline commands behind the `bfftrack` binary.
//!
//! Every command reads the same key=value configuration (`--config`), with
//! flags overriding file values, and writes its artifacts atomically under
//! `--out` together with a `<command>.manifest`.

mod commands;
mod manifest;
pub mod svg;

use std::path::PathBuf;

use bfftrack::Error;
use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "bfftrack", version, about = "Trajectory estimation from beamformed fingerprints")]
pub struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the fingerprint dataset over the grid
    EnvBuild(Overrides),
    /// Generate pedestrian/vehicle trajectories
    TrajGen(Overrides),
    /// Train models, one checkpoint per (model, profile, T_obs)
    Train(Overrides),
    /// Evaluate checkpoints and persistence on the test split
    Eval(EvalArgs),
    /// Render error-vs-sequence-length plots from a report
    Report(ReportArgs),
}

/// Flags shared by the pipeline commands; each overrides one config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Grid nodes per side
    #[arg(long)]
    pub grid: Option<usize>,
    /// Motion profile(s), comma separated
    #[arg(long)]
    pub profile: Option<String>,
    /// Trajectories per profile
    #[arg(long)]
    pub count: Option<usize>,
    /// Model(s), comma separated
    #[arg(long)]
    pub model: Option<String>,
    /// Observation window length(s), comma separated
    #[arg(long = "t-obs")]
    pub t_obs: Option<String>,
    /// `position` or `fingerprint`
    #[arg(long)]
    pub mode: Option<String>,
    /// Maximum training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Any other config key, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Evaluate this checkpoint only
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Report CSV (default: <out>/report.csv)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Process exit status for an error: 1 usage, 2 data/version, 3 numerical.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::UnknownKeys(_) => 1,
        Error::Training(_) | Error::Model(_) | Error::Shape { .. } => 3,
        Error::Domain(_) | Error::Generation(_) | Error::Format(_) | Error::Version(_) | Error::Io { .. } => 2,
    }
}
