//! `unigraph` command-line runner.
//!
//! Every failure is reported on stderr as one JSON object
//! `{"error": kind, "message": text, "exit_code": n}` with exit code 1 for
//! validation/usage problems, 2 for I/O and 3 for numeric failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unigraph::graph::ExportFormat;

#[derive(Debug, Parser)]
#[command(
    name = "unigraph",
    version,
    about = "Fuse multiple views of a user set into one kNN graph"
)]
struct Cli {
    /// Worker threads for the per-user aggregation stage (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the unified graph and neighbour lists from a manifest.
    Aggregate(AggregateArgs),
    /// Consistency of every view and of the unified graph over a k range.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic dataset (views, manifest, ground truth).
    Synth(SynthArgs),
    /// Re-export a neighbours CSV as graph files.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct GraphOutput {
    /// Output format; repeat or comma-separate for several.
    #[arg(long = "format", value_delimiter = ',', value_parser = parse_format, default_value = "edgelist")]
    formats: Vec<ExportFormat>,

    /// Also write the undirected graph of reciprocated pairs.
    #[arg(long)]
    mutual: bool,

    /// Community CSV (`user_id,community_id`) used to label graph nodes.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    manifest: PathBuf,

    /// Neighbours per user.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,

    #[arg(long)]
    out_dir: PathBuf,

    /// Recorded in the run summary; aggregation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[command(flatten)]
    output: GraphOutput,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,

    #[arg(long)]
    ground_truth: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    k_min: usize,

    #[arg(long, default_value_t = 15)]
    k_max: usize,

    #[arg(long)]
    out_dir: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 200)]
    n: usize,

    #[arg(long, default_value_t = 4)]
    communities: usize,

    /// Explicit community sizes, comma-separated; balanced when omitted.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,

    #[arg(long, default_value_t = 3)]
    views: usize,

    /// One value for all views or one per view, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0.6")]
    signal: Vec<f64>,

    /// One value for all views or one per view, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    coverage: Vec<f64>,

    #[arg(long, default_value_t = 20)]
    features_per_user: usize,

    #[arg(long, default_value_t = 200)]
    pool_size: usize,

    /// Fraction of users given a second community.
    #[arg(long, default_value_t = 0.0)]
    overlap: f64,

    /// How many of the views (the last ones) are written as relation edge lists.
    #[arg(long, default_value_t = 0)]
    relation_views: usize,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// `neighbours.csv` written by `aggregate`.
    #[arg(long)]
    neighbours: PathBuf,

    #[arg(long)]
    out_dir: PathBuf,

    #[command(flatten)]
    output: GraphOutput,
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: unigraph::Error| e.to_string())
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let message = text
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            return report("usage", message, 1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
