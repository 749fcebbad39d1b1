#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sampler_search::search::AgentKind;
use sampler_search::{Error, TransformMode};
use serde_json::json;

use crate::config::RunConfig;

/// Search static training-data samplers on synthetic noisy-label tasks.
#[derive(Debug, Parser)]
#[command(name = "sampler-search", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the blob dataset and write the train/val/test splits.
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the shared checkpoint with uniform sampling.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract the per-instance feature table from the shared checkpoint.
    Features {
        #[arg(long)]
        config: PathBuf,
    },
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "ss")]
        agent: AgentKind,
        #[arg(long, default_value = "cgf")]
        transform: TransformMode,
    },
    /// Retrain from the initial weights with a fixed sampler.
    Retrain {
        #[arg(long)]
        config: PathBuf,
        /// Search output (best sampler is used) or sampler parameter JSON.
        #[arg(long)]
        sampler: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank agreement between fine-tune scores and from-scratch retrains.
    SrTr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summary, best-so-far curve and noise CSVs over search outputs.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => "invalid_parameter",
        Error::Json(_) => "config",
        Error::Format { .. } => "file",
        Error::Io(_) | Error::Csv(_) => "io",
        Error::DegenerateSampler(_) => "degenerate_sampler",
        _ => "computation",
    }
}

fn run(cli: Cli) -> Result<PathBuf, Error> {
    match cli.command {
        Command::GenData { config } => commands::gen_data(&RunConfig::load(&config)?),
        Command::Pretrain { config } => commands::pretrain(&RunConfig::load(&config)?),
        Command::Features { config } => commands::features(&RunConfig::load(&config)?),
        Command::Search {
            config,
            agent,
            transform,
        } => commands::search(&RunConfig::load(&config)?, agent, transform),
        Command::Retrain {
            config,
            sampler,
            out,
        } => commands::retrain(&RunConfig::load(&config)?, &sampler, out.as_deref()),
        Command::SrTr {
            config,
            result,
            out,
        } => commands::sr_tr(&RunConfig::load(&config)?, &result, out.as_deref()),
        Command::Report {
            results,
            out,
            config,
        } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            commands::report(&results, &out, cfg.as_ref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(path) => {
            println!("{}", json!({ "ok": true, "output": path }));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "ok": false, "error": { "kind": error_kind(&e), "message": e.to_string() } })
            );
            ExitCode::FAILURE
        }
    }
}
