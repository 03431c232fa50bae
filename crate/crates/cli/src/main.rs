/// `println!` that tolerates a closed standard output.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod commands;
mod config;
mod provenance;
mod render;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tracing::Level;

use roadnet_core::agent::AgentError;
use roadnet_core::expert::ExpertError;
use roadnet_core::graph::GraphError;
use roadnet_core::metrics::MetricError;
use roadnet_core::synthetic::SyntheticError;
use roadnet_core::training::TrainingError;

use config::RunConfig;

/// Marks an error as bad input rather than a runtime failure.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(e: impl fmt::Display) -> anyhow::Error {
    Invalid(e.to_string()).into()
}

/// Whether `e` stems from invalid input or configuration (exit code 2).
pub fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<Invalid>()
            || c.is::<MetricError>()
            || c.is::<TrainingError>()
            || matches!(c.downcast_ref::<GraphError>(), Some(g) if !matches!(g, GraphError::Io(_)))
            || c.downcast_ref::<AgentError>().is_some()
            || matches!(c.downcast_ref::<SyntheticError>(), Some(SyntheticError::Spec(_)))
            || matches!(
                c.downcast_ref::<ExpertError>(),
                Some(ExpertError::Config(_) | ExpertError::DimensionMismatch(..) | ExpertError::TooManyLabels { .. })
            )
    })
}

#[derive(Debug, Parser)]
#[command(name = "roadnet", version, about = "Iterative road-network tracing toolkit")]
struct Cli {
    /// Run configuration (TOML, or JSON when the extension is .json).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set engine.roi_size=128`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic road tiles (graph JSON plus RGB PNG).
    GenSynthetic(commands::synthetic::Args),
    /// Run the expert over ground-truth tiles and write a training sample set.
    Sample(commands::sample::Args),
    /// Trace one tile with the oracle, noisy oracle or an external predictor.
    Trace(commands::trace::Args),
    /// Score a predicted graph against ground truth with TOPO and APLS.
    Eval(commands::eval::Args),
    /// Draw graphs as an SVG or PNG overlay.
    Render(commands::render::Args),
    /// Score a predictor's outputs on a sample set with the training loss.
    ScorePredictor(commands::score::Args),
    /// Check a predictor server for protocol conformance.
    CheckProtocol(commands::protocol::CheckArgs),
    /// Run a built-in predictor server on standard streams or a TCP port.
    Serve(commands::protocol::ServeArgs),
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn init_tracing(verbose: u8) {
    let level = match verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        2 => Level::DEBUG,
        _ => Level::TRACE,
    };
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenSynthetic(a) => commands::synthetic::run(a, &cfg),
        Command::Sample(a) => commands::sample::run(a, &cfg),
        Command::Trace(a) => commands::trace::run(a, &cfg),
        Command::Eval(a) => commands::eval::run(a, &cfg),
        Command::Render(a) => commands::render::run(a, &cfg),
        Command::ScorePredictor(a) => commands::score::run(a, &cfg),
        Command::CheckProtocol(a) => commands::protocol::check(a, &cfg),
        Command::Serve(a) => commands::protocol::serve(a, &cfg),
        Command::ShowConfig => {
            out!("{}", toml::to_string_pretty(&cfg)?.trim_end());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing(cli.verbose);
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
