//! Command-line front end for the retrieve-and-edit assertion pipeline.
//!
//! Configuration comes from defaults, then an optional `--config` JSON file,
//! then explicit flags, in increasing precedence. Every subcommand prints a
//! JSON document to stdout (or `--out`) and keeps logs on stderr, so runs can
//! be scripted and diffed. Exit codes: 0 on success, 1 on runtime failures
//! (with the offending path in the message), 2 on usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use assertedit::retrieval::Coefficient;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "assertedit", version, about = "Retrieve-and-edit generation of unit-test assertions")]
struct Cli {
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Retrieval similarity: jaccard, dice, or overlap.
    #[arg(long, global = true)]
    coefficient: Option<Coefficient>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a retrieval index over a dataset split and save it.
    Index(commands::IndexArgs),
    /// Find the most similar stored focal test for one query.
    Retrieve(commands::RetrieveArgs),
    /// Emit retrieval + alignment edit scripts for a split as JSONL.
    BuildEdits(commands::BuildEditsArgs),
    /// Train the editing model and write a checkpoint.
    Train(commands::TrainArgs),
    /// Generate assertions from a trained checkpoint.
    Generate(commands::GenerateArgs),
    /// Score a prediction file against references.
    Evaluate(commands::EvaluateArgs),
    /// Corpus statistics plus the retrieval edit-distance histogram.
    Analyze(commands::AnalyzeArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(coefficient) = cli.coefficient {
        cfg.coefficient = coefficient;
    }
    cfg.validate()?;
    match &cli.command {
        Command::Index(args) => commands::index(&cfg, args),
        Command::Retrieve(args) => commands::retrieve(&cfg, args),
        Command::BuildEdits(args) => commands::build_edits(&cfg, args),
        Command::Train(args) => commands::run_train(&cfg, args),
        Command::Generate(args) => commands::run_generate(&cfg, args),
        Command::Evaluate(args) => commands::evaluate(&cfg, args),
        Command::Analyze(args) => commands::analyze(&cfg, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
