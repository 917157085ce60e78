//! `mgig`: MGIG mode finding, importance sampling and CMC matrix completion
//! from the command line.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliResult;

#[derive(Parser)]
#[command(name = "mgig", version, about)]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mode of MGIG(Ψ, Φ, ν) with its residual and unimodality certificate.
    MgigMode(ModeArgs),
    /// Self-normalized importance-sampling estimates of E[Λ] and E[Λ⁻¹].
    MgigEstimate(EstimateArgs),
    /// Matrix completion with held-out log-loss evaluation.
    Complete(CompleteArgs),
    /// Generate a synthetic PMF dataset.
    GenSynthetic(SyntheticArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Ψ as a dense CSV matrix.
    #[arg(long)]
    psi: PathBuf,
    /// Φ as a dense CSV matrix.
    #[arg(long)]
    phi: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    nu: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeMethod {
    Closed,
    Schur,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct ModeArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, default_value = "closed")]
    method: ModeMethod,
    /// `csv` prints only the mode matrix.
    #[arg(long, value_enum, default_value = "json")]
    format: OutputFormat,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// mode-w, mode-iw, base-w or base-iw.
    #[arg(long, default_value = "mode-w")]
    proposal: String,
    /// Proposal dof; mode-matched proposals pick a default when omitted.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    DenseCsv,
    Triplets,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    CmcFull,
    CmcMean,
    Bpmf,
    PmfMap,
}

#[derive(Args)]
struct CompleteArgs {
    /// Dataset path, or `synthetic:n=30,m=300,d=5,delta=0.2`.
    #[arg(long)]
    data: String,
    #[arg(long, value_enum, default_value = "triplets")]
    format: FormatArg,
    /// Matrix shape `ROWSxCOLS` for triplets; defaults to the largest indices.
    #[arg(long)]
    shape: Option<String>,
    /// One or more methods, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    method: Vec<MethodArg>,
    /// zero (row-centered zero padding), zero-raw, or pmf.
    #[arg(long, default_value = "zero")]
    gap_fill: String,
    #[arg(long, default_value_t = 0.01)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma2_u: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma2_v: f64,
    /// Latent rank for the factorization baselines and PMF gap filling.
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value = "mode-iw")]
    proposal: String,
    #[arg(long)]
    rho: Option<f64>,
    /// Condition on N(0, Λ) instead of N(0, σ_v²Λ).
    #[arg(long)]
    bare_lambda: bool,
    #[arg(long, default_value_t = 1000)]
    gibbs_kept: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    lag: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory; `MGIG_OUT_DIR` is used when omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 6000)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma2_u: f64,
    #[arg(long, default_value_t = 0.05)]
    sigma2_v: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(error::CliError::validation(
                "InvalidInput: --workers must be at least 1",
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| error::CliError::validation(format!("InvalidInput: {e}")))?;
    }
    match cli.command {
        Command::MgigMode(a) => commands::mgig_mode(a),
        Command::MgigEstimate(a) => commands::mgig_estimate(a),
        Command::Complete(a) => commands::complete(a),
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
