//! Single entry-point binary for the chat-analysis pipeline.
//!
//! Subcommands mirror the pipeline stages: `ingest` chat exports into the
//! canonical corpus format, `annotate` partners interactively, print
//! corpus `stats`, `featurize` fold caches, `train` a model, `evaluate`
//! the experiment grid, emit analysis `report`s, and generate `synth`etic
//! corpora. Identical inputs and seed produce identical output artifacts.
//!
//! Precedence for shared settings: command-line flags override the
//! `--config` file, which overrides built-in defaults.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;

#[derive(Parser)]
#[command(
    name = "dialogscope",
    version,
    about = "Longitudinal chat-history analysis and speaker-attribute inference"
)]
struct Cli {
    /// TOML config file with defaults for the shared flags.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Seed for every random choice this invocation makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for output artifacts.
    #[arg(long, global = true)]
    out_dir: Option<std::path::PathBuf>,

    /// Emit machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a chat export into the canonical corpus format.
    Ingest(commands::IngestArgs),
    /// Interactively annotate conversation partners.
    Annotate(commands::AnnotateArgs),
    /// Corpus message and token statistics.
    Stats(commands::StatsArgs),
    /// Write per-fold feature caches.
    Featurize(commands::FeaturizeArgs),
    /// Train one model and save a checkpoint.
    Train(commands::TrainArgs),
    /// Run the leave-one-speaker-out experiment grid.
    Evaluate(commands::EvaluateArgs),
    /// Emit an analysis report (dominance, time, mirroring, clusters).
    Report(commands::ReportArgs),
    /// Generate a synthetic annotated corpus with planted signals.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let settings = match Settings::resolve(
        cli.config.as_deref(),
        cli.seed,
        cli.jobs,
        cli.out_dir.clone(),
        cli.json,
    ) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    dialogscope::exec::configure_jobs(settings.jobs);

    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(&settings, args),
        Command::Annotate(args) => commands::annotate(&settings, args),
        Command::Stats(args) => commands::stats(&settings, args),
        Command::Featurize(args) => commands::featurize(&settings, args),
        Command::Train(args) => commands::train(&settings, args),
        Command::Evaluate(args) => commands::evaluate(&settings, args),
        Command::Report(args) => commands::report(&settings, args),
        Command::Synth(args) => commands::synth(&settings, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
