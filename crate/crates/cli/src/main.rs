use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hlstm_core::ModelKind;

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(name = "hlstm", version, about = "Sequence learning on sparsely observed gridded time series")]
struct Cli {
    /// Worker threads for per-pixel and per-instance parallelism.
    #[arg(long, global = true, env = "HLSTM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bucket-model dataset.
    Synth(CommonArgs),
    /// Materialize a split specification into pixel and day lists.
    Split(CommonArgs),
    /// Fit one model kind and write its container.
    Train(CommonArgs),
    /// Fit (or load) models and write metric reports.
    Evaluate(EvaluateArgs),
    /// Train on the trailing years and score the years before them.
    Hindcast(CommonArgs),
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// JSON configuration, or a run manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split specification JSON.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Saved model container to score instead of fitting.
    #[arg(long)]
    model_file: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(commands::CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::CliError::Runtime(e.to_string()))?;
    }
    let to_opts = |a: CommonArgs, model_file: Option<PathBuf>| commands::Options {
        config: a.config,
        data: a.data,
        split: a.split,
        model: a.model,
        model_file,
        out: a.out,
        seed: a.seed,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&to_opts(a, None)),
        Command::Split(a) => commands::split(&to_opts(a, None)),
        Command::Train(a) => commands::train(&to_opts(a, None)),
        Command::Evaluate(a) => commands::evaluate(&to_opts(a.common, a.model_file)),
        Command::Hindcast(a) => commands::hindcast(&to_opts(a, None)),
    }
}
