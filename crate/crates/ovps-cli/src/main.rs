//! `ovps` binary: batch commands for the open-vocabulary panoptic
//! segmentation engine.
//!
//! Exit codes: 0 success, 2 validation error, 3 data error, 4 failed
//! numerical check. Logging level comes from the `OVPS_LOG` environment
//! variable (error, warn, info, debug).

use clap::{Parser, Subcommand};
use ovps_cli::commands;
use ovps_cli::error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ovps", version, about = "Open-vocabulary panoptic segmentation engine")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override (fixture generation, gradient-check probes).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-image processing.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the config's `fixture` section.
    Genfix,
    /// Run the decision pipeline over a scenes directory.
    Classify {
        /// Also write per-image wall-clock timings (timings.json; not
        /// byte-deterministic).
        #[arg(long)]
        timings: bool,
    },
    /// Evaluate predictions against ground truth (PQ family + mIoU).
    Eval {
        /// Prediction directory (defaults to the config's `eval.pred_dir`).
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        /// Ground-truth directory (defaults to the config's `eval.gt_dir`).
        #[arg(long)]
        gt_dir: Option<PathBuf>,
    },
    /// Compute the training-side loss report over scenes with ground truth.
    Losses {
        /// Verify every loss gradient against central finite differences
        /// and fail (exit 4) on relative error >= 1e-4.
        #[arg(long)]
        gradcheck: bool,
    },
    /// Pairwise cosine-similarity statistics of a concept set.
    Simstats {
        /// Concept-set document; defaults to the config's predicting set.
        #[arg(long)]
        concepts: Option<PathBuf>,
    },
    /// Coarse-to-fine category paths over the config's concept tree.
    Hierarchy,
}

fn require_config(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::validation("--config is required for this command".into()))
}

fn require_out(cli: &Cli) -> Result<&PathBuf, CliError> {
    cli.out
        .as_ref()
        .ok_or_else(|| CliError::validation("--out is required for this command".into()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Genfix => commands::genfix::run(&commands::genfix::GenfixArgs {
            config: require_config(cli)?,
            out: require_out(cli)?,
            seed: cli.seed,
        }),
        Command::Classify { timings } => commands::classify::run(&commands::classify::ClassifyArgs {
            config: require_config(cli)?,
            out: require_out(cli)?,
            threads: cli.threads,
            timings: *timings,
        }),
        Command::Eval { pred_dir, gt_dir } => commands::eval::run(&commands::eval::EvalArgs {
            config: require_config(cli)?,
            out: require_out(cli)?,
            pred_dir: pred_dir.as_deref(),
            gt_dir: gt_dir.as_deref(),
        }),
        Command::Losses { gradcheck } => commands::losses::run(&commands::losses::LossesArgs {
            config: require_config(cli)?,
            out: require_out(cli)?,
            gradcheck: *gradcheck,
            seed: cli.seed.unwrap_or(7),
        }),
        Command::Simstats { concepts } => commands::simstats::run(&commands::simstats::SimstatsArgs {
            config: cli.config.as_deref(),
            concepts: concepts.as_deref(),
            out: require_out(cli)?,
        }),
        Command::Hierarchy => commands::hierarchy::run(&commands::hierarchy::HierarchyArgs {
            config: require_config(cli)?,
            out: require_out(cli)?,
        }),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("OVPS_LOG")).init();
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
