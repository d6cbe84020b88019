use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glycofde_cli::{run_pipeline, run_stage, CliError, Context, Method, Overrides, PipelineConfig, Stage};

#[derive(Parser)]
#[command(
    name = "glycofde",
    version,
    about = "Finite difference equation models of postprandial glucose"
)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Methods to train and evaluate, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    method: Option<Vec<String>>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output; repeat for debug messages.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic raw data and its ground-truth model.
    GenData,
    /// Build meal segments from the raw CSV files.
    Preprocess,
    /// Cluster segments by pre-meal glucose and write the elbow table.
    Cluster,
    /// Split each cluster into training, validation and test segments.
    Split,
    /// Fit the configured methods per cluster.
    Train,
    /// Score the trained models on the test segments.
    Evaluate,
    /// Render tables and figures from the evaluation.
    Report,
    /// Run every stage in order.
    Run,
    /// Print the effective configuration.
    Config,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let methods = cli
        .method
        .as_ref()
        .map(|list| list.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    config.apply(&Overrides {
        seed: cli.seed,
        methods,
        out: cli.out.clone(),
    });
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = Context::new(config)?;
    let stage = match cli.command {
        Command::GenData => Stage::GenData,
        Command::Preprocess => Stage::Preprocess,
        Command::Cluster => Stage::Cluster,
        Command::Split => Stage::Split,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::Run => return run_pipeline(&ctx),
        Command::Config => {
            print!("{}", ctx.config.to_toml());
            return Ok(());
        }
    };
    run_stage(&ctx, stage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
