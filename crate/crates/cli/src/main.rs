//! plslab: train, evaluate and sweep pairwise-label-smoothing experiments
//! from declarative JSON configs. Exit codes are a stable contract:
//! 0 success, 1 runtime failure, 2 configuration or usage error.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::EvalFlags;

#[derive(Parser)]
#[command(name = "plslab", version, about = "Pairwise label smoothing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint.json, runlog.csv and report.json.
    Train {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Directory for the run artifacts.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on the config's test split.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment config describing the dataset and eval settings.
        #[arg(long)]
        config: PathBuf,
        /// Directory for the report files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the calibration bins as ece.csv.
        #[arg(long)]
        ece: bool,
        /// Also write the winning-score histogram as histogram.csv.
        #[arg(long)]
        hist: bool,
        /// Search the temperature grid on the validation split and report
        /// ECE before and after scaling.
        #[arg(long)]
        temperature: bool,
        /// Also score the config's eval.ood dataset and write ood.csv.
        #[arg(long)]
        ood: bool,
    },
    /// Run the config once per value of one axis and aggregate a sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Which knob the values vary.
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values: numbers for w/alpha, strategy tokens
        /// (e.g. uls:alpha=0.1) for the strategy axis.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 41)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Check one strategy token instead of the default set.
        #[arg(long)]
        strategy: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    W,
    Alpha,
    Strategy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out_dir } => commands::cmd_train(&config, &out_dir),
        Command::Eval {
            checkpoint,
            config,
            out_dir,
            ece,
            hist,
            temperature,
            ood,
        } => commands::cmd_eval(
            &checkpoint,
            &config,
            &out_dir,
            EvalFlags {
                ece,
                hist,
                temperature,
                ood,
            },
        ),
        Command::Sweep {
            config,
            out_dir,
            axis,
            values,
        } => commands::cmd_sweep(&config, axis, &values, &out_dir),
        Command::Gradcheck {
            seed,
            epsilon,
            tolerance,
            strategy,
        } => commands::cmd_gradcheck(seed, epsilon, tolerance, strategy.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
