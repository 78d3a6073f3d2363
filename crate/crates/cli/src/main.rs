//! `scout`: ingest dataset metadata, build vector indices, query, evaluate
//! and serve.
//!
//! Exit codes: 0 success, 1 usage or contract error, 2 partial failure.

mod commands;
mod config;
mod setup;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "scout", version, about = "Metadata-based dataset exploration with retrieval and LLM filtering")]
struct Cli {
    /// TOML file with default settings. Flags and environment take precedence.
    #[arg(long, global = true, env = "SCOUT_CONFIG")]
    config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate raw metadata and write a catalog file.
    Ingest(commands::IngestArgs),
    /// Print catalog statistics.
    Stats(commands::StatsArgs),
    /// Embed the catalog and write one index file per mode.
    Index(commands::IndexArgs),
    /// Run one task for one dataset.
    Query(commands::QueryArgs),
    /// Run the task x mode x sample grid and write report files.
    Evaluate(commands::EvaluateArgs),
    /// Serve the HTTP API.
    Serve(commands::ServeArgs),
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn fatal(e: impl fmt::Display) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }

    pub fn partial(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let filter = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(filter)),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = cli
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()
        .and_then(|file| {
            let file = file.unwrap_or_default();
            match cli.command {
                Command::Ingest(args) => commands::ingest(args, &file),
                Command::Stats(args) => commands::stats(args, &file),
                Command::Index(args) => commands::index(args, &file),
                Command::Query(args) => commands::query(args, &file),
                Command::Evaluate(args) => commands::evaluate(args, &file),
                Command::Serve(args) => commands::serve(args, &file),
            }
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
