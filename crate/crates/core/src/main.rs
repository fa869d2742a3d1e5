use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaplab::orchestrator::{load_config_with, run_stages, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "gaplab", version, about = "Filler-gap evaluation of word-level language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate test paradigms
    Gen,
    /// Build the base corpus
    SynthCorpus,
    /// Build the augmented corpus and the shared vocabulary
    Augment,
    /// Train the base and augmented models
    Train,
    /// Score every paradigm under each model
    Score,
    /// Fit effects and mixed models, write the CSV tables
    Analyze,
    /// Render charts and the Markdown report
    Report,
    /// Run every stage and write the manifest
    Pipeline,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Gen => Stage::Stimuli,
            Command::SynthCorpus => Stage::Corpus,
            Command::Augment => Stage::Augment,
            Command::Train => Stage::TrainAug,
            Command::Score => Stage::Score,
            Command::Analyze => Stage::Analyze,
            Command::Report => Stage::Report,
            Command::Pipeline => Stage::Manifest,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match load_config_with(cli.config.as_deref(), cli.seed, cli.out) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_stages(&config, cli.command.stage()) {
        Ok(manifest) => {
            println!("{}", config.out_dir.display());
            if let Some(m) = manifest {
                log::info!("manifest lists {} artifacts", m.artifacts.len());
            }
            ExitCode::SUCCESS
        }
        Err(e @ PipelineError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
