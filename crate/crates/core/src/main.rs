use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_recourse::harness::jobs;

/// Bayesian and robust Bayesian recourse for black-box classifiers.
#[derive(Parser)]
#[command(name = "rbr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the data and train the current classifier.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Build the local sample set around one input.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "samples.json")]
        out: PathBuf,
    },
    /// Generate one recourse from a saved model and sample set.
    Recourse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "recourse.json")]
        out: PathBuf,
    },
    /// Accuracy and AUC of the current and future classifiers.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "benchmark.json")]
        out: PathBuf,
    },
    /// Cost/validity sweep over every method and grid point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "sweep")]
        out_dir: PathBuf,
    },
}

fn error_record(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return error_record("usage", e.to_string().trim()),
    };
    let result = match &cli.command {
        Command::Train { config, out_dir } => jobs::run_train(config, out_dir),
        Command::Sample { config, out } => jobs::run_sample(config, out).map(|ls| {
            serde_json::json!({ "samples0": ls.samples0.len(), "samples1": ls.samples1.len(), "radius": ls.radius })
        }),
        Command::Recourse { config, out } => jobs::run_recourse(config, out),
        Command::Benchmark { config, out } => jobs::run_benchmark(config, out),
        Command::Sweep { config, out_dir } => jobs::run_sweep_job(config, out_dir),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => error_record(e.kind(), &e.to_string()),
    }
}
