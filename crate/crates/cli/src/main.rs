use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or inconsistent inputs and configuration.
    #[error("{0}")]
    Input(String),
    /// A numeric self-check failed.
    #[error("{0}")]
    Numeric(String),
}

impl From<weaksup::Error> for CliError {
    fn from(e: weaksup::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "weaksup", version, about = "Weak supervision with rule denoising and co-training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply rules to documents; write the weak-label matrix and rule statistics.
    Match(InputArgs),
    /// Train the denoiser and classifier; write a checkpoint and logs.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// train, dev or test.
        #[arg(long)]
        split: Option<String>,
        /// Where to write the JSON report (default: <out>/eval_report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the learned rule reliabilities, highest first.
    Inspect {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of every gradient path.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines documents.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// External score files (`doc_id<TAB>value`), named by file stem.
    #[arg(long, value_delimiter = ',')]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Class names in index order, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold_p: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clean_fraction: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Match(input) => commands::cmd_match(input),
        Command::Train { input, hyper } => commands::cmd_train(input, hyper),
        Command::Eval {
            input,
            model,
            split,
            report,
        } => commands::cmd_eval(input, model, split, report),
        Command::Inspect { model, config } => commands::cmd_inspect(model, config),
        Command::Gradcheck {
            seed,
            trials,
            corrupt,
        } => commands::cmd_gradcheck(seed, trials, corrupt.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are input errors; help and version are not errors.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
