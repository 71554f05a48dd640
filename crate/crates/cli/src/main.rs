mod commands;
mod manifest;
mod pipeline;

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use relgraph::datastore::DataError;
use relgraph::dsl::CompileError;
use relgraph::grounder::GroundError;
use relgraph::inference::InferenceError;
use relgraph::learning::LearnError;
use relgraph::relnets::RelnetsError;

use commands::{compile, embeddings, eval, fixtures, ground, infer, synth, train};

/// Compile relational programs into factor graphs, then train and run
/// neural scorers with MAP inference under hard constraints.
#[derive(Debug, Parser)]
#[command(name = "relgraph", version)]
struct Cli {
    /// Worker threads for folds and instances [default: available cores]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a program and report its templates and constraints
    Compile(compile::CompileArgs),
    /// Ground a program against its data and report or dump the factor graphs
    Ground(ground::GroundArgs),
    /// Score and decode every instance, writing assignment files
    Infer(infer::InferArgs),
    /// Train with cross-validation, writing checkpoints and metrics
    Train(train::TrainArgs),
    /// Score assignment files against the gold labels
    Eval(eval::EvalArgs),
    /// Generate a synthetic corpus
    Synth(synth::SynthArgs),
    /// Print the embedding tables of symbolic entities
    Embeddings(embeddings::EmbeddingsArgs),
    /// Check every fixture under a directory against its golden dump
    Fixtures(fixtures::FixturesArgs),
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match &cli.command {
        Command::Compile(a) => compile::run(a),
        Command::Ground(a) => ground::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Embeddings(a) => embeddings::run(a),
        Command::Fixtures(a) => fixtures::run(a),
    }
}

fn kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<CompileError>() {
            return "compile";
        } else if cause.is::<DataError>() {
            return "data";
        } else if cause.is::<GroundError>() {
            return "ground";
        } else if cause.is::<InferenceError>() {
            return "inference";
        } else if cause.is::<LearnError>() {
            return "learning";
        } else if cause.is::<RelnetsError>() {
            return "network";
        } else if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

/// One JSON object on stderr describing the failure.
fn report(err: &anyhow::Error) {
    let mut value = json!({
        "error": kind(err),
        "message": format!("{:#}", err),
    });
    if let Some(span) = err.chain().find_map(|c| c.downcast_ref::<CompileError>()).map(CompileError::span) {
        value["line"] = json!(span.line);
        value["column"] = json!(span.col);
    }
    eprintln!("{}", value);
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELGRAPH_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}
