use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

mod artifacts;
mod commands;
mod config;
mod failure;

use commands::Context;
use config::EngineConfig;
use failure::{AtStage, CmdResult, Stage};

/// Scaling-law analysis for families of training curves.
///
/// Exit codes: 0 success, 1 other failure, 2 ingest error, 3 fit error,
/// 4 configuration or usage error.
#[derive(Debug, Parser)]
#[command(name = "scalelaw", version)]
struct Cli {
    /// Engine configuration file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Artifact directory. Falls back to the config, then $SCALELAW_OUTPUT_DIR, then ".".
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,

    /// Repeat for more logging (-v info, -vv debug).
    #[arg(long, short, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest run logs and fit allocation laws, the envelope and the loss law.
    Fit(commands::fit::FitArgs),
    /// Compute-optimal allocation plans from fitted law artifacts.
    Predict(commands::predict::PredictArgs),
    /// Generate synthetic run logs from a known loss surface.
    Synth(commands::synth::SynthArgs),
    /// Token counts and the FLOPs ceiling of the infinite-data regime.
    Budget(commands::budget::BudgetArgs),
    /// Correlate pre-training loss with downstream metrics.
    Correlate(commands::correlate::CorrelateArgs),
    /// Coefficient table across fitted artifact directories.
    Report(commands::report::ReportArgs),
}

fn run(cli: Cli) -> CmdResult {
    let config = EngineConfig::load(cli.config.as_deref()).at(Stage::Config)?;
    let ctx = Context {
        config,
        output_dir: cli.output_dir,
    };
    match cli.command {
        Command::Fit(args) => commands::fit::run(&ctx, args),
        Command::Predict(args) => commands::predict::run(&ctx, args),
        Command::Synth(args) => commands::synth::run(&ctx, args),
        Command::Budget(args) => commands::budget::run(&ctx, args),
        Command::Correlate(args) => commands::correlate::run(&ctx, args),
        Command::Report(args) => commands::report::run(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error {
                ExitCode::from(Stage::Config.exit_code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_env("SCALELAW_LOG")
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.stage.exit_code())
        }
    }
}
