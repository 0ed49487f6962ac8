//! `mksr` batch command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure. Diagnostics go to stderr as a single line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mksr", version, about = "Multiple-kernel sparse representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn a distance matrix into an RBF kernel file.
    MakeKernel(MakeKernelArgs),
    /// Check that a kernel matrix is finite, symmetric and PSD.
    Validate(ValidateArgs),
    /// Learn kernel weights and a multilevel dictionary.
    Train(TrainArgs),
    /// Encode held-out samples with a trained model.
    Encode(EncodeArgs),
    /// Ridge classification on codes, scored on held-out labels.
    EvalClassify(EvalClassifyArgs),
    /// Spectral clustering of the training codes.
    EvalCluster(EvalClusterArgs),
    /// Generate a planted dataset as a manifest directory.
    Synth(SynthArgs),
    /// Summarize a trained model.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct MakeKernelArgs {
    #[arg(long)]
    distances: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bandwidth; defaults to the inverse mean off-diagonal distance.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = mksr::kernel::PSD_TOL)]
    psd_tol: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long, default_value_t = mksr::kernel::PSD_TOL)]
    psd_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Supervised,
    Unsupervised,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    manifest: PathBuf,
    /// TOML training configuration; the Oxford preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip per-kernel unit-mean-diagonal scaling.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test-by-train matrices, one per kernel in training order.
    #[arg(long, num_args = 1.., required = true)]
    cross: Vec<PathBuf>,
    /// Codes, one row per sample.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Supplies any of the training labels, cross files and test labels
    /// not given explicitly.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    cross: Vec<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    ridge: f64,
    /// Metric rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Predicted test labels.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalClusterArgs {
    #[arg(long)]
    model: PathBuf,
    /// Number of clusters; defaults to the number of classes in the labels.
    #[arg(long)]
    clusters: Option<usize>,
    /// Ground truth for scoring.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Gaussian,
    Lines,
    TwoKernelPlanted,
    ThreeCluster,
    Surrogate,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::MakeKernel(a) => commands::make_kernel(a),
        Command::Validate(a) => commands::validate(a),
        Command::Train(a) => commands::train(a),
        Command::Encode(a) => commands::encode(a),
        Command::EvalClassify(a) => commands::eval_classify(a),
        Command::EvalCluster(a) => commands::eval_cluster(a),
        Command::Synth(a) => commands::synth(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("mksr: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
