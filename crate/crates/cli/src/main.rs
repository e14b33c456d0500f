mod commands;
mod error;
mod evaluator;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use bitalloc::engine::DEFAULT_TOLERANCE;
use bitalloc::oracle::DEFAULT_ENUMERATION_CAP;
use bitalloc::sensitivity::DEFAULT_MULTIPLIER;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use evaluator::EvaluatorSpec;

pub const VERSION: &str = env!("BITALLOC_VERSION");

#[derive(Parser, Debug)]
#[command(name = "bitalloc", version = VERSION, about = "Per-layer quantization bit-width search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure per-layer sensitivity and report which layers pruning freezes.
    Sensitivity(SensitivityArgs),
    /// Run the surrogate-assisted search and select configs for bit targets.
    Search(SearchArgs),
    /// Run the one-shot or greedy baseline for bit targets.
    Baseline(BaselineArgs),
    /// Enumerate a small space exhaustively and compare fronts against it.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CommonArgs {
    /// Search-space JSON file.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// `synthetic:<params.json>` or `exec:<command...>`.
    #[arg(long)]
    pub evaluator: EvaluatorSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of evaluator instances to fan batches out to.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A threshold multiplier, or `off`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Multiplier(pub Option<f64>);

impl std::fmt::Display for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Some(m) => write!(f, "{m}"),
            None => write!(f, "off"),
        }
    }
}

impl FromStr for Multiplier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("off") {
            return Ok(Multiplier(None));
        }
        let m: f64 = s.parse().map_err(|_| format!("expected a number or 'off', got '{s}'"))?;
        if !(m.is_finite() && m > 0.0) {
            return Err(format!("multiplier must be positive, got {m}"));
        }
        Ok(Multiplier(Some(m)))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = Multiplier(Some(DEFAULT_MULTIPLIER)), value_name = "FLOAT|off")]
    pub prune_multiplier: Multiplier,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Initial random samples.
    #[arg(long)]
    pub initial: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Configs verified per iteration.
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub crossover: Option<f64>,
    #[arg(long)]
    pub mutation: Option<f64>,
    /// Top of the predicted population from which candidates are spread out.
    #[arg(long)]
    pub subset_pool: Option<usize>,
    #[arg(long, default_value_t = Multiplier(Some(DEFAULT_MULTIPLIER)), value_name = "FLOAT|off")]
    pub prune_multiplier: Multiplier,
    #[arg(long, value_delimiter = ',', default_value = "2.5,3.0,3.5")]
    pub target_bits: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Continue from the checkpoint in this run directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OneShot,
    Greedy,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long, value_delimiter = ',', required = true)]
    pub target_bits: Vec<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    /// Order reversing.
    Negate,
    Exp,
    Cube,
}

impl Transform {
    pub fn apply(self, q: f64) -> f64 {
        match self {
            Transform::Identity => q,
            Transform::Negate => -q,
            Transform::Exp => q.exp(),
            Transform::Cube => q * q * q,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// A front.json to score against the exhaustive front.
    #[arg(long)]
    pub front: Option<PathBuf>,
    /// Transform applied to the scores for the front-coincidence check.
    #[arg(long, value_enum, default_value_t = Transform::Identity)]
    pub transform: Transform,
    /// Largest space to enumerate.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sensitivity(args) => commands::sensitivity(&args),
        Command::Search(args) => commands::search(&args),
        Command::Baseline(args) => commands::baseline(&args),
        Command::Oracle(args) => commands::oracle(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
