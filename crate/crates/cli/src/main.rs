//! drchot: batch front-end for the DRC hotspot prediction pipeline.
//!
//! Subcommands cover the whole flow — synthetic layout generation, feature
//! extraction, dataset splitting, ensemble and random-forest training,
//! scoring, evaluation, hyperparameter grid search, and the settings
//! comparison matrix. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error, 3 undefined-metric abort.

mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "drchot", version, about = "DRC hotspot prediction pipeline")]
struct Cli {
    /// Worker threads for training (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a suite of synthetic layouts with planted DRC hotspots.
    GenSynth {
        /// Generator config JSON (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for <design>.layout.json / <design>.drc.json files.
        #[arg(long)]
        out_dir: PathBuf,
        /// Number of designs in the suite.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract per-g-cell feature vectors from a layout and its DRC report.
    Extract {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        drc: PathBuf,
        /// Design name recorded in each sample (default: layout file stem).
        #[arg(long)]
        design_id: Option<String>,
        /// Output samples file (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Also write the samples as a flat CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Split samples into train / validation / per-design test sets.
    Split {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        /// Split spec JSON (fractions, holdouts; defaults 0.2/0.2/0.6).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Designs sent entirely to their test sets.
        #[arg(long, value_delimiter = ',')]
        holdout: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output split manifest JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the soft-voting neural-network ensemble on the train split.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Training config JSON (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides both the training and selection seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Output model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the random-forest baseline on the train split.
    RfTrain {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Forest config JSON (defaults apply when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output forest JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score samples with a trained model (ensemble or forest).
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        /// Output scores CSV (key,score).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a score file against sample labels.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        /// Output report JSON.
        #[arg(long)]
        report: PathBuf,
        /// Optional ROC curve CSV.
        #[arg(long)]
        roc: Option<PathBuf>,
        /// Optional precision-recall curve CSV.
        #[arg(long)]
        pr: Option<PathBuf>,
    },
    /// Grid-search hyperparameters, selecting by validation-set metric.
    GridSearch {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Grid spec JSON (candidate lists).
        #[arg(long)]
        grid: PathBuf,
        /// Selection metric (overrides the grid file).
        #[arg(long)]
        metric: Option<MetricChoice>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output ranked results JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run settings 1-4 and the random forest over every test set.
    Matrix {
        #[arg(long, num_args = 1.., required = true)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for matrix.csv, matrix.md and run.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    #[value(name = "a_roc")]
    ARoc,
    #[value(name = "acc_e")]
    AccE,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure {threads} threads: {err}");
            return ExitCode::from(2);
        }
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<drchot_core::Error>() {
                Some(drchot_core::Error::UndefinedMetric(_)) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
