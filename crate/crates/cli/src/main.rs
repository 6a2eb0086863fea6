#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use explore_bench::query::Task;

use crate::config::AgentKind;

/// Bad input: arguments, config files, instance files or parameters.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// At least one episode ended in a crash, timeout or protocol fault.
#[derive(Debug)]
pub struct EpisodeFailure(pub String);

impl std::fmt::Display for EpisodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EpisodeFailure {}

#[derive(Parser)]
#[command(name = "explore-bench", version, about = "Budgeted exploration benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file from a preset or generator parameters.
    Gen(GenArgs),
    /// Run an experiment grid and write JSONL episode logs.
    Run(RunArgs),
    /// Pooled best-of-p estimates from single-thread logs.
    Pool(PoolArgs),
    /// Reward tables and plot series from episode logs.
    Analyze(AnalyzeArgs),
    /// Parallelization thresholds of the power-law success model.
    Theory(TheoryArgs),
    /// Baseline parameter or difficulty sweeps.
    Sweep(SweepArgs),
    /// Wire-protocol agent that replays reply lines from a file.
    #[command(hide = true)]
    ReplayAgent { trace: PathBuf },
}

#[derive(Args)]
pub struct GenArgs {
    /// Preset name, e.g. tree-main or sat-sweep-k3.
    #[arg(long, conflicts_with_all = ["task", "random"])]
    pub preset: Option<String>,
    /// Task for explicit generator parameters.
    #[arg(long)]
    pub task: Option<Task>,
    /// Generator parameter override, key=value (repeatable).
    #[arg(long = "param", requires = "task")]
    pub params: Vec<String>,
    /// Draw parameters from the random-suite ranges with this seed.
    #[arg(long, requires = "task")]
    pub random: Option<u64>,
    /// Instance seed for explicit parameters.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; without it only the summary is printed.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Write only the agent-visible part of the instance.
    #[arg(long)]
    pub public: bool,
    /// List the preset names and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub agent: Option<AgentKind>,
    /// Baseline parameter override, key=value (repeatable).
    #[arg(long = "param")]
    pub params: Vec<String>,
    /// Subprocess agent command, run through `sh -c`.
    #[arg(long)]
    pub command: Option<String>,
    /// Reply-line file for a scripted agent.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Per-reply timeout for subprocess agents, in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<u32>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub parallel: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub summaries: Vec<u32>,
    /// Allow p that does not divide N (threads get floor(N/p)).
    #[arg(long)]
    pub allow_floor: bool,
    /// Record rendered observations and replies in the logs.
    #[arg(long)]
    pub transcript: Option<bool>,
    /// Output directory (default: $EXPLORE_BENCH_OUT or ./runs).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Maximum concurrent episodes.
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Args)]
pub struct PoolArgs {
    /// JSONL log files.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Total budget N; runs of budget N/p are pooled for each p.
    #[arg(long)]
    pub budget: u32,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub p: Vec<u32>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Bootstrap resamples for standard errors.
    #[arg(long, default_value_t = explore_bench::analysis::DEFAULT_BOOTSTRAP_B)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pooled-parallel columns for these p.
    #[arg(long, value_delimiter = ',')]
    pub parallel: Vec<u32>,
    /// Total budget of the pooled-parallel and summary tables (default: largest logged).
    #[arg(long)]
    pub budget: Option<u32>,
    /// Write the scaling series TSV here.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Args)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub p: Vec<u32>,
    /// Grid points of the condition table.
    #[arg(long, default_value_t = 10)]
    pub points: usize,
    /// Fit (c, alpha) to success rates from these logs instead.
    #[arg(long)]
    pub fit: Vec<PathBuf>,
    /// Success threshold on normalized reward for --fit.
    #[arg(long, default_value_t = explore_bench::theory::DEFAULT_SUCCESS_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub task: Task,
    /// Baseline parameter to sweep (alpha, beta, tau); omit for a difficulty sweep.
    #[arg(long)]
    pub param: Option<String>,
    /// Parameter values, comma separated, or start:stop:step.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, default_value_t = 48)]
    pub budget: u32,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the logs of every point here.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a),
        Command::Pool(a) => commands::pool(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Theory(a) => commands::theory(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ReplayAgent { trace } => commands::replay_agent(&trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<EpisodeFailure>().is_some() {
                ExitCode::from(3)
            } else if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
