mod analytics;
mod files;
mod model;
mod plot;
mod review;
mod sim;
mod svg;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cueguard", version, about = "Sensitive-query moderation gateway tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway.
    Serve {
        /// TOML config file; CUEGUARD_* variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model file from JSONL datasets.
    Train(model::TrainArgs),
    /// Report accuracy of a model file on a JSONL test set.
    Evaluate(model::EvaluateArgs),
    /// Draw a dataset matching the reference category distribution.
    Resample(model::ResampleArgs),
    /// Validate rule files and turn their exemplars into training data.
    #[command(subcommand)]
    Rules(model::RulesCommand),
    /// Synthetic query streams.
    #[command(subcommand)]
    Sim(sim::SimCommand),
    /// Aggregate a decision log.
    Analytics(analytics::AnalyticsArgs),
    /// Write figure data series (CSV) and SVG charts for a decision log.
    Plot(plot::PlotArgs),
    /// Review sampling, verdicts and precision.
    #[command(subcommand)]
    Review(review::ReviewCommand),
    /// Print the taxonomy catalog and reference distribution as JSON.
    Taxonomy {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn serve(config: Option<PathBuf>) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let config = cueguard_server::ServerConfig::load(config.as_deref())?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(cueguard_server::run(config)).map_err(|e| anyhow::anyhow!(e))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Serve { config } => serve(config),
        Command::Train(args) => model::train(args),
        Command::Evaluate(args) => model::evaluate(args),
        Command::Resample(args) => model::resample(args),
        Command::Rules(cmd) => model::rules(cmd),
        Command::Sim(cmd) => sim::run(cmd),
        Command::Analytics(args) => analytics::run(args),
        Command::Plot(args) => plot::run(args),
        Command::Review(cmd) => review::run(cmd),
        Command::Taxonomy { out } => {
            let doc = cueguard_core::taxonomy::taxonomy_document(&Default::default());
            files::emit(out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
        }
    }
}
