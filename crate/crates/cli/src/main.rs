mod commands;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "netfe", version, about = "Fixed effects on networks: connectivity diagnostics, estimation, projection and simulation")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "NETFE_THREADS")]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Connectivity report for an edge list.
    Diag(DiagArgs),
    /// Fit vertex effects from an edge list with outcomes, or two-way matched data.
    Fit(FitArgs),
    /// Weighted one-mode projection of matched data onto the second vertex type.
    Project(ProjectArgs),
    /// Monte Carlo run from a key-value config file.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct DiagArgs {
    /// CSV with columns i,j[,w].
    pub edges: PathBuf,
    /// Fail on a disconnected graph instead of keeping the largest component.
    #[arg(long)]
    pub no_reduce: bool,
    /// Error variance used for the per-vertex variances and bounds.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Also estimate diag(S†) with this many random probes.
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write per-vertex statistics as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    /// Σ d_i α_i = 0
    D,
    /// Σ α_i = 0
    Mean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SeArg {
    Plugin,
    PluginUnscaled,
    Homosked,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RouteArg {
    Joint,
    Profiled,
    Weightedfd,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Edge CSV (i,j[,w],y,covariates…) or, with --two-way, matched CSV (i,j,y,covariates…).
    pub data: PathBuf,
    /// Treat rows as type-1/type-2 matches: y = μ_i + η_j + xβ + u.
    #[arg(long)]
    pub two_way: bool,
    /// Outcome column of an edge CSV; every other non-endpoint, non-`w` column is a covariate.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, value_enum, default_value_t = NormArg::D)]
    pub normalization: NormArg,
    #[arg(long, value_enum, default_value_t = SeArg::Plugin)]
    pub se: SeArg,
    /// Estimation route for η in two-way mode.
    #[arg(long, value_enum, default_value_t = RouteArg::Joint)]
    pub route: RouteArg,
    #[arg(long)]
    pub no_reduce: bool,
    /// Fit CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Matched CSV with columns i,j[,y,…].
    pub data: PathBuf,
    /// Projection CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Key-value config file.
    pub config: PathBuf,
    /// Override the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Write the JSON report here (stdout when absent).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the fixture edge list and the first replication's data here.
    #[arg(long)]
    pub export_dir: Option<PathBuf>,
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
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }
    let result = match &cli.command {
        Command::Diag(a) => commands::diag(a),
        Command::Fit(a) => commands::fit(a),
        Command::Project(a) => commands::project(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
