mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::output::CliError;

#[derive(Parser, Debug)]
#[command(name = "dynenvwalk", version, about = "Random walks in dynamical random environments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ModelArgs {
    /// Model JSON file.
    #[arg(long, conflicts_with = "fixture")]
    pub model: Option<PathBuf>,
    /// Built-in model instead of a file: f1, f2, f3, f1-kappa1, f1-2d, iid-time-3d, slow-three-state.
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    AnnealedLazy,
    QuenchedShared,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionalArg {
    Projection,
    SupNorm,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model assumptions; exit 0 iff all pass.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run walks and write renewal blocks and tau samples.
    Simulate(SimulateArgs),
    /// Velocity, covariance and i.i.d. diagnostics from a blocks file.
    Estimate(EstimateArgs),
    /// Annealed invariance-principle checks.
    Annealed(AnnealedArgs),
    /// Quenched variance decay and covariance-gap experiments.
    Quenched(QuenchedArgs),
    /// Evaluate the quenched dimension condition.
    CheckConditions(ConditionArgs),
    /// Search for exponents satisfying the quenched constants system.
    FindConstants(ConstantsArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::AnnealedLazy)]
    pub mode: ModeArg,
    /// Write trajectory_<replica>.jsonl, keeping every k-th step.
    #[arg(long)]
    pub log_stride: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    /// blocks.csv produced by `simulate`.
    #[arg(long)]
    pub blocks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AnnealedArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    pub n: u64,
    #[arg(long, default_value_t = 2000)]
    pub replicas: usize,
    /// Steps in the independent run that fixes v and Sigma.
    #[arg(long, default_value_t = 20_000_000)]
    pub calibration_steps: u64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 1.0])]
    pub times: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct QuenchedArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub b: f64,
    #[arg(long, default_value_t = 4)]
    pub m_min: u32,
    #[arg(long, default_value_t = 10)]
    pub m_max: u32,
    #[arg(long, default_value_t = 100)]
    pub env_replicas: usize,
    #[arg(long, default_value_t = 100)]
    pub walk_replicas: usize,
    /// Walker pairs per scale for the covariance gap; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub pairs: usize,
    #[arg(long, value_enum, default_value_t = FunctionalArg::Projection)]
    pub functional: FunctionalArg,
    /// 1-based axis of the projection direction.
    #[arg(long, default_value_t = 1)]
    pub axis: usize,
    #[arg(long, default_value_t = 3.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub calibration_steps: u64,
    /// Pairs for the range-intersection diagnostic; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub intersection_pairs: usize,
    #[arg(long, default_value_t = 10)]
    pub run_length: u64,
    /// Walk length for the intersection diagnostic.
    #[arg(long, default_value_t = 1000)]
    pub intersection_steps: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ConditionArgs {
    #[arg(long)]
    pub dimension: usize,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub epsilon: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantsArgs {
    #[arg(long)]
    pub dimension: usize,
    /// Tail exponent; alternatively give --kappa and --epsilon.
    #[arg(long, conflicts_with_all = ["kappa", "epsilon"])]
    pub gamma: Option<f64>,
    #[arg(long, requires = "epsilon")]
    pub kappa: Option<f64>,
    #[arg(long, requires = "kappa")]
    pub epsilon: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Validate { model, out } => commands::validate(&model, out.as_deref(), threads),
        Command::Simulate(a) => commands::simulate(&a, threads),
        Command::Estimate(a) => commands::estimate(&a, threads),
        Command::Annealed(a) => commands::annealed(&a, threads),
        Command::Quenched(a) => commands::quenched(&a, threads),
        Command::CheckConditions(a) => commands::check_conditions(&a),
        Command::FindConstants(a) => commands::find_constants(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
