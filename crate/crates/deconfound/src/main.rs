use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deconfound::cli::{self, CommandKind, OutputFormat, RunConfig};

#[derive(Parser)]
#[command(name = "deconfound", version, about = "Causal additive models with latent confounding: data generation, spectral deconfounding, and DAG scoring")]
struct Cli {
    /// Config file (TOML; .json also accepted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `global_seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Thread count hint; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output format for dataset artifacts.
    #[arg(long, global = true, value_parser = parse_format, default_value = "csv")]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(format!("unknown format `{other}` (expected csv or json)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample an SCM with latent confounders and write the dataset.
    Generate,
    /// Estimate confounder sufficient statistics by spectral projection.
    Pcss,
    /// Score parent sets from a request file.
    Score,
    /// Run an evaluation task across seeds and methods.
    Bench,
    /// Sweep reconstruction error over a (p, sigma_h) grid.
    MseReport,
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Generate => CommandKind::Generate,
            Command::Pcss => CommandKind::Pcss,
            Command::Score => CommandKind::Score,
            Command::Bench => CommandKind::Bench,
            Command::MseReport => CommandKind::MseReport,
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut config = match &args.config {
        Some(path) => match RunConfig::from_path(path) {
            Ok(c) => c,
            Err(err) => {
                eprintln!("error: {err}");
                return ExitCode::from(err.exit_code() as u8);
            }
        },
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.global_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.parallelism = Some(workers);
    }

    match cli::run(args.command.kind(), &config, &args.out, args.format) {
        Ok(manifest) => {
            println!(
                "{}: {} output file(s) in {}",
                manifest.command,
                manifest.outputs.len(),
                args.out.display()
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
