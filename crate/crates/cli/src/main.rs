use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tlstm::trainer::{ModelKind, TrainConfig};
use tlstm_cli::commands::{self, Scorer};
use tlstm_cli::config::{parse_models, ExperimentConfig};
use tlstm_cli::error::{CliError, CliResult};

/// Time-modulated LSTM experiments on simulated image sequences.
///
/// Exit codes: 0 success, 1 invalid arguments, configuration or inputs,
/// 2 I/O failure, 3 numerical failure (non-finite values, failed gradient
/// check).
#[derive(Parser)]
#[command(name = "tlstm", version)]
struct Cli {
    /// Experiment configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test datasets plus a manifest.
    Simulate {
        /// Root seed; overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of training sequences; overrides `n_train`.
        #[arg(long)]
        n_train: Option<usize>,
        /// Number of test sequences; overrides `n_test`.
        #[arg(long)]
        n_test: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its checkpoint and loss log.
    Train {
        /// Training dataset (JSON lines); defaults to `train_data`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Held-out dataset whose loss is logged each epoch; defaults to `test_data`.
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Model: baseline, lstm, tlstmv1 or tlstmv2.
        #[arg(long, value_parser = parse_cell)]
        cell: ModelKind,
        /// Root seed for initialisation and shuffling; overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of epochs; overrides `epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Output directory; defaults to `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint (or a predictions file) on a dataset.
    Evaluate {
        /// Checkpoint written by `train`.
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        /// CSV of final-step probabilities: `id,p_0,p_6,p_8,p_3,p_9`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Dataset to score; defaults to `test_data`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Decision threshold; overrides `threshold`.
        #[arg(long)]
        threshold: Option<f64>,
        /// Output directory; defaults to `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full benchmark: simulate, train every model, evaluate, one combined table.
    Compare {
        /// Comma-separated root seeds; overrides `seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated models; overrides `models`.
        #[arg(long)]
        models: Option<String>,
        /// Output directory; defaults to `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every gradient block of every model.
    Gradcheck {
        /// Seed for the check's data and initialisation.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every transition of a dataset against the transition table.
    Check {
        /// Dataset to check (JSON lines).
        #[arg(long)]
        data: PathBuf,
    },
}

fn parse_cell(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown cell {s:?}; expected baseline, lstm, tlstmv1 or tlstmv2"))
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Validation(format!("missing {what}")))
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let progress = !cli.quiet;
    match cli.command {
        Command::Simulate {
            seed,
            n_train,
            n_test,
            out,
        } => {
            let seed = seed.unwrap_or(cfg.seed);
            let (n_train, n_test) = (n_train.unwrap_or(cfg.n_train), n_test.unwrap_or(cfg.n_test));
            let paths = commands::simulate(&cfg, seed, n_train, n_test, &out)?;
            println!("wrote {}", paths.train.display());
            println!("wrote {}", paths.test.display());
            println!("wrote {}", paths.manifest.display());
        }
        Command::Train {
            data,
            test_data,
            cell,
            seed,
            epochs,
            out,
        } => {
            let data = required(data, &cfg.train_data, "--data (or train_data in the config)")?;
            let out = required(out, &cfg.out_dir, "--out (or out_dir in the config)")?;
            let test_data = test_data.or(cfg.test_data.clone());
            let config = TrainConfig {
                model: cell,
                seed: seed.unwrap_or(cfg.seed),
                epochs: epochs.unwrap_or(cfg.train.epochs),
                ..cfg.train.clone()
            };
            config.validate()?;
            let train_set = tlstm::simulator::read_dataset(&data)?;
            let held_out = test_data.as_deref().map(tlstm::simulator::read_dataset).transpose()?;
            let paths = commands::train_model(&config, &train_set, held_out.as_ref(), &out, progress)?;
            println!("wrote {}", paths.checkpoint.display());
            println!("wrote {}", paths.loss_log.display());
        }
        Command::Evaluate {
            checkpoint,
            predictions,
            data,
            threshold,
            out,
        } => {
            let data = required(data, &cfg.test_data, "--data (or test_data in the config)")?;
            let out = required(out, &cfg.out_dir, "--out (or out_dir in the config)")?;
            let threshold = threshold.unwrap_or(cfg.train.threshold);
            let scorer = match (&checkpoint, &predictions) {
                (Some(c), _) => Scorer::Checkpoint(c),
                (None, Some(p)) => Scorer::Predictions(p),
                (None, None) => return Err(CliError::Validation("give --checkpoint or --predictions".into())),
            };
            let paths = commands::evaluate(scorer, &data, threshold, &out)?;
            print!("{}", std::fs::read_to_string(&paths.markdown).unwrap_or_default());
            println!("wrote {}", paths.csv.display());
            println!("wrote {}", paths.markdown.display());
            println!("wrote {}", paths.predictions.display());
        }
        Command::Compare { seeds, models, out } => {
            let out = required(out, &cfg.out_dir, "--out (or out_dir in the config)")?;
            if let Some(seeds) = seeds {
                cfg.seeds = seeds;
            }
            if let Some(models) = models {
                cfg.models = parse_models(&models)
                    .ok_or_else(|| CliError::Validation(format!("bad --models {models:?}")))?;
            }
            cfg.validate()?;
            let paths = commands::compare(&cfg, &out, progress)?;
            print!("{}", std::fs::read_to_string(&paths.table).unwrap_or_default());
            println!("wrote {}", paths.table.display());
            println!("wrote {}", paths.csv.display());
        }
        Command::Gradcheck { seed, out } => {
            let report = commands::run_gradcheck(&cfg, seed, out.as_deref())?;
            print!("{}", report.to_text());
            if !report.passed() {
                let worst = report.worst().expect("failed report has entries");
                return Err(CliError::Numerical(format!(
                    "gradient check failed: {} {} relative error {:.3e} >= {:.0e}",
                    worst.model, worst.block, worst.max_rel_error, report.tolerance
                )));
            }
            println!("all blocks below {:.0e}", report.tolerance);
        }
        Command::Check { data } => {
            let summary = commands::check_dataset(Path::new(&data))?;
            for v in summary.violations.iter().take(20) {
                println!("{v}");
            }
            println!(
                "{} sequences, {} transitions, {} violations",
                summary.sequences,
                summary.transitions,
                summary.violations.len()
            );
            if !summary.violations.is_empty() {
                return Err(CliError::Validation(format!("{} illegal transitions", summary.violations.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
