//! Command implementations behind the `blockclique` binary.

pub mod canonical;
pub mod commands;
pub mod overrides;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    CliqueExplosion(String),
    #[error("{0}")]
    Structural(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::CliqueExplosion(_) => 3,
            CliError::Structural(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "blockclique", version, about = "Blockclique simulation and analysis toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the network simulator.
    Simulate(SimulateArgs),
    /// Finality fork attack analysis.
    Attack(AttackArgs),
    /// Replay a JSON-lines block trace through consensus.
    Replay(ReplayArgs),
    /// Dump the selection schedule for a slot range as JSON lines.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Directory for output files; results go to stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON simulation config; the desk-scale default when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides, e.g. `N=8 T=2 C_B=12e6 mu=0.1`.
    #[arg(long = "override", num_args = 1..)]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the per-arrival propagation trace.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[arg(long, default_value_t = 0.45)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long = "F", default_value_t = 64)]
    pub finality: u32,
    #[arg(long = "E", default_value_t = 0)]
    pub endorsement_slots: u32,
    /// Starting fitness difference; −(F−1)(E+1) when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<i64>,
    /// Report only the attack duration moments.
    #[arg(long)]
    pub duration: bool,
    /// Report only the newcomer safety threshold for `--mu`.
    #[arg(long)]
    pub threshold: bool,
    /// Report only the E = 0 closed form.
    #[arg(long)]
    pub closed_form: bool,
    /// Parameter sweep, `beta=lo:hi:step`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Slot counts at which to evaluate the duration tail bound.
    #[arg(long, value_delimiter = ',')]
    pub tail: Vec<u64>,
    /// Slot interval t0 in seconds, for the δ < t0/2 check.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Maximum network delay δ in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Resource snapshot delay K in seconds.
    #[arg(long = "K", default_value_t = 0.0)]
    pub snapshot_delay: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Protocol parameters JSON, used when the trace has no params line.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "override", num_args = 1..)]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = blockclique_core::consensus::DEFAULT_CLIQUE_CAP)]
    pub clique_cap: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub nodes: u32,
    #[arg(long = "T", default_value_t = 32)]
    pub threads: u32,
    #[arg(long = "E", default_value_t = 0)]
    pub endorsement_slots: u32,
    /// First period, inclusive.
    #[arg(long, default_value_t = 1)]
    pub from: u64,
    /// Last period, exclusive.
    #[arg(long)]
    pub to: u64,
    #[command(flatten)]
    pub output: Output,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Attack(a) => commands::attack(&a),
        Command::Replay(a) => commands::replay(&a),
        Command::Schedule(a) => commands::schedule(&a),
    }
}
