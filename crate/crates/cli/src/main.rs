//! `trackedit`: command-line entry point for the motion-editing pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "trackedit", version, about = "Edit 3D point tracks, preview edits and train the toy track-conditioned model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

/// Flags shared by every command. Values here override the `--config` file.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Input project directory.
    #[arg(long, global = true)]
    pub project: Option<PathBuf>,
    /// Edit spec JSON.
    #[arg(long, global = true)]
    pub edit: Option<PathBuf>,
    /// Output directory; must not lie inside any input.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random draw (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of tracks to condition on.
    #[arg(long, global = true)]
    pub tracks: Option<usize>,
    /// Euler steps for generation.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub port: Option<u16>,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON run config; flags win over its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Zeroed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a raw project directory and write its normalized copy to --out.
    Ingest,
    /// Apply --edit to --project and write the edited project to --out.
    Edit,
    /// Render depth-splat preview frames and coverage masks for --edit.
    Preview,
    /// Write a seeded, perturbed training copy of --project.
    Augment,
    /// Write a procedural toy dataset.
    GenToy,
    /// Train the toy model and write metrics and a checkpoint.
    TrainToy {
        #[arg(long, value_enum, default_value = "full")]
        mode: Mode,
    },
    /// Generate the edited target clip with a trained checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: Mode,
    },
    /// Compare two clips; writes report.json and prints a table.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Directory of per-frame label PNGs; nonzero pixels are scored.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Serve the HTTP API over --project.
    Serve,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Edit => "edit",
            Command::Preview => "preview",
            Command::Augment => "augment",
            Command::GenToy => "gen-toy",
            Command::TrainToy { .. } => "train-toy",
            Command::Generate { .. } => "generate",
            Command::Eval { .. } => "eval",
            Command::Serve => "serve",
        }
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    env_logger::Builder::new().parse_filters(cfg.log_level.as_deref().unwrap_or("warn")).target(env_logger::Target::Stderr).init();
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Edit => commands::edit(&cfg),
        Command::Preview => commands::preview(&cfg),
        Command::Augment => commands::augment(&cfg),
        Command::GenToy => commands::gen_toy(&cfg),
        Command::TrainToy { mode } => commands::train_toy(&cfg, mode),
        Command::Generate { checkpoint, mode } => commands::generate(&cfg, &checkpoint, mode),
        Command::Eval { a, b, mask } => commands::eval(&cfg, &a, &b, mask.as_deref()),
        Command::Serve => commands::serve(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", commands::CliError::Usage(first.to_string()).to_json_line("trackedit"));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line(name));
            ExitCode::FAILURE
        }
    }
}
