mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpc_warmstart::Error;

#[derive(Debug, Parser)]
#[command(name = "mpc-warmstart", version, about = "Learned warm starts for certified model predictive control")]
struct Cli {
    /// Worker threads for parallel evaluation and sharded gradients.
    #[arg(long, global = true, env = "MPC_WARMSTART_THREADS", default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train and test datasets by hot-started random walks.
    GenData(GenDataArgs),
    /// Train the planner network on a dataset.
    Train(TrainArgs),
    /// Open-loop iteration and suboptimality statistics on a test set.
    EvalOpen(EvalOpenArgs),
    /// Closed-loop simulation from test-set initial states.
    EvalClosed(EvalClosedArgs),
    /// Solve a single problem instance.
    Solve(SolveArgs),
}

/// Which control problem to use.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
struct ProblemArgs {
    /// Benchmark system 1-4.
    #[arg(long)]
    sys: Option<String>,
    /// Problem file (see FORMATS.md).
    #[arg(long)]
    problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Goal counts for the train, buffer and test stages.
    #[arg(long, default_value = "2000,400,400")]
    goals: String,
    /// Walk step size; defaults to 1/20 of the shortest state-box edge.
    #[arg(long)]
    step_d: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Training dataset; defaults to <out>/train.mpcd.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Layer widths, e.g. 2,32,32,30; defaults to the benchmark architecture.
    #[arg(long)]
    widths: Option<String>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalOpenArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Test dataset; defaults to <out>/test.mpcd.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Network model; without it only cold starts are evaluated.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Termination criteria: pf, pfsub, gap:<t>, optimal.
    #[arg(long, default_value = "pf,pfsub,gap:0.1,optimal")]
    criteria: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalClosedArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Test dataset supplying the initial states; defaults to <out>/test.mpcd.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "pfsub,gap:0.1,optimal")]
    criteria: String,
    /// Number of initial states drawn from the test set.
    #[arg(long, default_value_t = 16)]
    x0_count: usize,
    #[arg(long, default_value_t = 500)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// State, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Warm-start network model.
    #[arg(long)]
    warm: Option<PathBuf>,
    #[arg(long, default_value = "optimal")]
    criterion: String,
    /// Also print z, nu and lambda.
    #[arg(long)]
    full: bool,
}

/// Exit codes: 0 success, 2 infeasible input, 3 configuration, 4 numerical.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible => 2,
        Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::Parse { .. }
        | Error::Version { .. }
        | Error::UnsupportedDimension { .. }
        | Error::Config(_)
        | Error::Io(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(3);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a, cli.threads),
        Command::EvalOpen(a) => commands::eval_open(a),
        Command::EvalClosed(a) => commands::eval_closed(a),
        Command::Solve(a) => commands::solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
