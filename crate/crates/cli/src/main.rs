use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod output;

/// Genome-wide association analysis with sparse model selection.
#[derive(Debug, Parser)]
#[command(name = "gwasms", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-marker scan with Bonferroni and Benjamini-Hochberg reports.
    Scan(commands::scan::ScanArgs),
    /// Full model-selection pipeline.
    Select(commands::select::SelectArgs),
    /// Simulation study comparing detection methods.
    Simulate(commands::simulate::SimulateArgs),
    /// Fill missing genotypes from correlated neighbours.
    Impute(commands::impute::ImputeArgs),
    /// Correlation clustering for the effective number of markers.
    Cluster(commands::cluster::ClusterArgs),
}

/// Dataset files shared by the analysis subcommands.
#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct InputArgs {
    /// Genotype matrix: one row per individual, codes -1/0/1, NA for missing.
    #[arg(long)]
    pub genotypes: PathBuf,
    /// SNP metadata: `snp_id chromosome position` per line.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Trait values, one per individual.
    #[arg(long = "trait")]
    pub trait_values: Option<PathBuf>,
    /// Covariates forced into every model, one row per individual.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
}

/// Problems with the invocation or its inputs, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl std::fmt::Display) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Scan(a) => commands::scan::run(a),
        Command::Select(a) => commands::select::run(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Impute(a) => commands::impute::run(a),
        Command::Cluster(a) => commands::cluster::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
