//! `oa`: drives the pipeline from corpus ingestion to the HTTP service.
//!
//! Every subcommand accepts `--seed`, `--config` and `--out`. JSON results go
//! to `--out` and a human-readable table to stdout; without `--out` the JSON
//! is printed instead of the table. Exit codes: 0 success, 1 usage, 2 data
//! error, 3 backend or I/O error.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "oa", version, about = "Office-action response pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice; overrides the config file
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file (OAE__SECTION__KEY variables override it)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the JSON result here
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Artifact directory; overrides service.data_dir
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Als,
    Bpr,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a line-delimited corpus and report what was accepted
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Extra stoplist entries, one per line
        #[arg(long)]
        stoplist: Option<PathBuf>,
    },
    /// Fit one topic model
    LdaFit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
    },
    /// Fit and score one topic model per K, then pick K
    LdaGrid {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated topic counts; defaults to lda.grid
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        stoplist: Option<PathBuf>,
    },
    /// Replay recorded Delphi rounds until consensus
    DelphiRun {
        /// JSON array of the initial topic proposals
        #[arg(long)]
        topics: PathBuf,
        /// One round of ratings per line
        #[arg(long)]
        ratings: PathBuf,
        /// One round of expert actions per line
        #[arg(long)]
        actions: Option<PathBuf>,
        #[arg(long)]
        max_rounds: Option<usize>,
    },
    /// Score responses from their value signals
    ValueScore {
        #[arg(long)]
        signals: PathBuf,
    },
    /// Admit high-value responses as templates into the data directory
    BuildTemplates {
        #[arg(long)]
        signals: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Embed each template's source OA and write the embedding store
    EmbedStore {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train per-topic collaborative filtering models
    CfTrain {
        /// Interaction lines {user, template, weight}; defaults to the event log
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "als")]
        method: MethodArg,
    },
    /// Recommend templates for an office action
    Recommend {
        #[arg(long)]
        oa: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        k: Option<usize>,
        /// Blend weight on the CF score
        #[arg(long)]
        w: Option<f64>,
    },
    /// Offline precision/recall/nDCG of CB, CF and the hybrids
    Evaluate {
        /// One case per line {user, oa_text, relevant}
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        interactions: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        w: Option<f64>,
    },
    /// Extract bibliographic fields and technical keywords from an OA
    ParseOa {
        #[arg(long)]
        oa: PathBuf,
        /// Claims of the current application
        #[arg(long)]
        claims: Option<PathBuf>,
        /// Prior-art texts, repeatable
        #[arg(long)]
        prior: Vec<PathBuf>,
    },
    /// Assemble a prompt and generate remarks
    Generate {
        #[arg(long)]
        draft: PathBuf,
        #[arg(long)]
        oa: Option<PathBuf>,
        /// Template ids from the data directory, repeatable
        #[arg(long)]
        template: Vec<String>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Serve the JSON API until interrupted
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input.
    #[error("{0}")]
    Data(String),
    /// Remote backend or filesystem failure.
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

/// Result of a subcommand: the JSON document and the stdout table.
pub struct Output {
    pub json: serde_json::Value,
    pub table: String,
}

pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = commands::load_config(&cli.common)?;
    let output = commands::dispatch(&cli.command, config)?;
    let Some(output) = output else { return Ok(()) };
    let mut body = serde_json::to_string_pretty(&output.json).map_err(|e| CliError::Backend(e.to_string()))?;
    body.push('\n');
    let mut stdout = std::io::stdout().lock();
    let written = match &cli.common.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::Backend(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(path, body).map_err(|e| CliError::Backend(format!("{}: {e}", path.display())))?;
            stdout.write_all(output.table.as_bytes())
        }
        None => stdout.write_all(body.as_bytes()),
    };
    written.map_err(|e| CliError::Backend(format!("stdout: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(run(std::env::args_os()))
}
