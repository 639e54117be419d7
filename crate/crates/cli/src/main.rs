//! `svsp` command-line front end.
//!
//! Exit codes: 0 on success, 2 on input errors (missing or malformed files,
//! bad arguments, environment and bridge failures), 3 on numerical failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svsp::CriticMode;

#[derive(Debug, Parser)]
#[command(name = "svsp", version, about = "Distil policies into chains of SVM-gated linear subpolicies")]
struct Cli {
    /// Log more (repeat for more detail); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distil a dataset into a policy file.
    Distill(DistillArgs),
    /// Roll a policy out in an environment and write the report files.
    Eval(EvalArgs),
    /// Print the gates and subpolicy coefficients of a policy.
    Inspect(InspectArgs),
    /// Write the serving node on a 2-D grid through state space.
    Boundary(BoundaryArgs),
    /// Generate a synthetic piecewise-linear task, its dataset and critic.
    Synth(SynthArgs),
    /// Repeat distill + eval once per seed, one subdirectory per seed.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriticModeArg {
    Q1Only,
    MinTwin,
}

impl From<CriticModeArg> for CriticMode {
    fn from(mode: CriticModeArg) -> Self {
        match mode {
            CriticModeArg::Q1Only => CriticMode::Q1Only,
            CriticModeArg::MinTwin => CriticMode::MinTwin,
        }
    }
}

/// Inputs and hyper-parameters of one distillation.
#[derive(Debug, Args)]
struct DistillOptions {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset table (`s0,…,a0,…` header).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Critic: an exported Q network, or a synthetic task descriptor.
    #[arg(long)]
    critic: Option<PathBuf>,
    /// Second (twin) Q network.
    #[arg(long)]
    critic2: Option<PathBuf>,
    /// Teacher actor network, used for the state value V(s) = Q(s, actor(s)).
    /// Without it the recorded action is scored.
    #[arg(long)]
    actor: Option<PathBuf>,
    /// How twin critics are combined.
    #[arg(long, value_enum)]
    critic_mode: Option<CriticModeArg>,
    /// Relative-advantage threshold τ (1 = as good as the teacher).
    #[arg(long)]
    threshold: Option<f64>,
    /// Maximum number of subpolicies.
    #[arg(long)]
    iterations: Option<usize>,
    /// Smallest rejected region that is still split off.
    #[arg(long)]
    min_region_size: Option<usize>,
    /// Ridge penalty of the subpolicy fits.
    #[arg(long)]
    ridge_lambda: Option<f64>,
    /// SVM soft-margin constant C.
    #[arg(long)]
    svm_c: Option<f64>,
    /// SVM training epochs.
    #[arg(long)]
    svm_epochs: Option<usize>,
    /// Seed of the SVM training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DistillArgs {
    #[command(flatten)]
    inputs: DistillOptions,
    /// Output policy file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy file written by `distill`.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Environment: builtin:point-mass[:DIMS], builtin:piecewise:<task.json>
    /// or bridge:<command line>.
    #[arg(long)]
    env: Option<String>,
    /// Number of episodes; episode e uses seed base-seed + e.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Parallel environment instances.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for report.json and episodes.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also score action fidelity on this dataset (needs --manifest).
    #[arg(long, requires = "manifest")]
    dataset: Option<PathBuf>,
    #[arg(long, requires = "dataset")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Policy file written by `distill`.
    policy: PathBuf,
    /// Manifest supplying feature and action names.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    /// Policy file written by `distill`.
    #[arg(long)]
    policy: PathBuf,
    /// The two state dimensions spanning the grid.
    #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0, 1])]
    dims: Vec<usize>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-1.0, 1.0], allow_negative_numbers = true)]
    x_range: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-1.0, 1.0], allow_negative_numbers = true)]
    y_range: Vec<f64>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Value of every other state dimension.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    fill: f64,
    /// Output table (`x,y,node`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of regions K.
    #[arg(long, default_value_t = 2)]
    regions: usize,
    #[arg(long, default_value_t = 4)]
    state_dim: usize,
    /// Recorded teacher episodes.
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Seed of the task; recording uses seeds base-seed + e.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Share of the remaining state space each halfspace claims.
    #[arg(long)]
    region_share: Option<f64>,
    /// Distance of the recorded teacher from the optimal action.
    #[arg(long)]
    teacher_deviation: Option<f64>,
    /// Output directory for dataset.csv, manifest.json and task.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    inputs: DistillOptions,
    /// Environment selector, as for `eval`.
    #[arg(long)]
    env: Option<String>,
    /// Number of replicates; replicate r distils with seed + r.
    #[arg(long)]
    replicates: Option<usize>,
    /// Episodes per replicate.
    #[arg(long)]
    episodes: Option<usize>,
    /// Replicate r evaluates episodes base-seed + r·episodes + e.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Replicates run in parallel.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Distill(args) => commands::distill(args),
        Command::Eval(args) => commands::eval(args),
        Command::Inspect(args) => commands::inspect(args),
        Command::Boundary(args) => commands::boundary(args),
        Command::Synth(args) => commands::synth(args),
        Command::Replicate(args) => commands::replicate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_input_error() { 2 } else { 3 })
        }
    }
}
