//! `varsep`: p-values for whether one variable separates two estimated
//! clusters. `test` runs the tests on a CSV dataset, `simulate` runs a
//! synthetic scenario, `report` merges simulation reports into a power table.

mod manifest;
mod report;
mod simulate;
mod testcmd;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Failure carrying the exit code contract: 1 usage, 2 data, 3 internal.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "varsep",
    version,
    about = "Valid p-values for whether a variable separates two estimated clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset and test cluster pairs on each variable
    Test(TestArgs),
    /// Run a simulation scenario and write its report files
    Simulate(SimulateArgs),
    /// Merge simulation reports into one power table
    Report(ReportArgs),
}

#[derive(Args)]
pub struct TestArgs {
    /// CSV file, one row per observation
    #[arg(long)]
    pub input: PathBuf,
    /// Numeric columns to analyse, comma separated; default: every column
    /// whose non-missing cells all parse as numbers
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    /// Keep only rows where a label column equals a value; repeatable, all
    /// filters must hold
    #[arg(long = "where", value_name = "LABEL=VALUE")]
    pub filters: Vec<String>,
    /// Standardize each column to mean 0 and variance 1 before clustering
    #[arg(long)]
    pub scale: bool,
    /// Number of clusters for the Ward cut
    #[arg(long)]
    pub k: usize,
    /// Restrict to one cluster pair (1-based ids)
    #[arg(long, value_name = "K,L")]
    pub pair: Option<String>,
    /// Restrict to one variable by column name
    #[arg(long, value_name = "NAME")]
    pub variable: Option<String>,
    /// Which tests to run
    #[arg(long, default_value = "all", value_parser = ["all", "direct", "merged", "dip", "ttest"])]
    pub method: String,
    /// Monte Carlo perturbations per selective test
    #[arg(long, default_value_t = 2000)]
    pub mc_samples: usize,
    /// Uniform replicates calibrating the dip test
    #[arg(long, default_value_t = 2000)]
    pub dip_reps: usize,
    /// Level for the significance column
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Master seed; every cell derives its own stream from it
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file, with a .manifest.json sidecar; default stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, default_value = "tsv", value_parser = ["tsv", "json"])]
    pub format: String,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// null_gaussian, three_clusters, contamination, intervening or
    /// robustness_distribution
    #[arg(long)]
    pub scenario: String,
    /// Rows per replication (per cluster for three_clusters)
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of variables
    #[arg(long)]
    pub p: Option<usize>,
    /// Separation parameter of the scenario
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of clusters for the Ward cut
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// Rejection level used for the summary's rejection rates
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Monte Carlo perturbations per selective test
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Uniform replicates calibrating the dip test
    #[arg(long)]
    pub dip_reps: Option<usize>,
    /// Master seed of the run
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Sampling shape for robustness_distribution
    #[arg(long)]
    pub distribution: Option<String>,
    /// Which tests to run
    #[arg(long, default_value = "all", value_parser = ["all", "direct", "merged", "dip", "ttest"])]
    pub method: String,
    /// Output prefix: writes <out>.json, <out>.tsv and <out>.manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Simulation report JSON files from the same scenario
    pub inputs: Vec<PathBuf>,
    /// Output file, with a .manifest.json sidecar; default stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, default_value = "tsv", value_parser = ["tsv", "json"])]
    pub format: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Test(args) => testcmd::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Report(args) => report::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Expands the --method flag into the canonical method order.
pub fn parse_methods(s: &str) -> Result<Vec<varsep_core::selective::Method>, CliError> {
    use varsep_core::selective::Method;
    if s == "all" {
        return Ok(Method::ALL.to_vec());
    }
    s.parse::<Method>().map(|m| vec![m]).map_err(CliError::Usage)
}

/// Writes `text` to `out` or to stdout when no path was given.
pub fn write_or_print(text: &str, out: Option<&std::path::Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Internal(format!("creating {}: {e}", dir.display())))?;
            }
            std::fs::write(path, text)
                .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
