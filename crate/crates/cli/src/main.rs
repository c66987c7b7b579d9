mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{Failure, Outcome};

/// Utility-focused annotation, training and evaluation for dense retrievers.
#[derive(Debug, Parser)]
#[command(name = "utilret", version)]
struct Cli {
    /// Pipeline config (TOML). Built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set pool.n=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build candidate pools from first-stage runs and human qrels.
    Pool(commands::PoolArgs),
    /// Label pools with an LLM annotator.
    Annotate(commands::AnnotateArgs),
    /// Train the encoder on one label source.
    Train(commands::TrainArgs),
    /// Train on LLM labels, then refine on a fraction of human labels.
    Curriculum(commands::CurriculumArgs),
    /// Rank the whole collection for every query with a checkpoint.
    Retrieve(commands::RetrieveArgs),
    /// Answer queries from their top retrieved passages.
    Generate(commands::GenerateArgs),
    /// Score a run or a set of generated answers.
    Evaluate(commands::EvaluateArgs),
    /// Precision, recall and average positives of annotation files.
    Stats(commands::StatsArgs),
    /// Run the bundled synthetic end-to-end experiment.
    SynthExperiment(commands::SynthArgs),
}

fn run(cli: &Cli) -> Outcome<()> {
    let loaded = config::load(cli.config.as_deref(), &cli.overrides)?;
    log::info!("config sha256 {}", loaded.sha256);
    match &cli.command {
        Command::Pool(a) => commands::pool(&loaded, a),
        Command::Annotate(a) => commands::annotate(&loaded, a),
        Command::Train(a) => commands::train_cmd(&loaded, a),
        Command::Curriculum(a) => commands::curriculum_cmd(&loaded, a),
        Command::Retrieve(a) => commands::retrieve(&loaded, a),
        Command::Generate(a) => commands::generate(&loaded, a),
        Command::Evaluate(a) => commands::evaluate(&loaded, a),
        Command::Stats(a) => commands::stats(&loaded, a),
        Command::SynthExperiment(a) => commands::synth(&loaded, a),
    }
}

/// The error chain joined by ": ", skipping causes a message already quotes.
fn render(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors; everything else is a usage error
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { kind, error }) => {
            eprintln!("error: {}", render(&error));
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
