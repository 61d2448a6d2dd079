//! `tnvqc` — train, gradient-check and evaluate the hybrid classifiers.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use tnvqc::checkpoint;
use tnvqc::data::{load_binary_mnist, load_split, Split};
use tnvqc::gradcheck;
use tnvqc::training::{self, evaluate_with_workers, Mode, OptimizerKind, RunSummary, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 2).
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable or malformed data / checkpoint (exit 3).
    #[error("data: {0}")]
    Data(String),
    /// Anything else that stops a run (exit 1).
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<tnvqc::Error> for CliError {
    fn from(e: tnvqc::Error) -> Self {
        use tnvqc::Error as E;
        match e {
            E::Usage(_) | E::Config(_) => CliError::Usage(e.to_string()),
            E::Io(_) | E::Format { .. } | E::Input(_) => CliError::Data(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tnvqc", version, about = "Hybrid MPS / variational-circuit binary classifier on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one of the three pipelines and write a run directory.
    Train(TrainArgs),
    /// Check every gradient implementation against independent oracles.
    Gradcheck(GradcheckArgs),
    /// Evaluate a checkpoint on a data split and print JSON.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    PcaVqc,
    MpsClassifier,
    MpsVqc,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PcaVqc => Mode::PcaVqc,
            ModeArg::MpsClassifier => Mode::MpsClassifier,
            ModeArg::MpsVqc => Mode::MpsVqc,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Adam,
    Rmsprop,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Bond dimension (MPS modes only).
    #[arg(long)]
    chi: Option<usize>,
    /// Chain position of the MPS output leg.
    #[arg(long)]
    output_site: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-sample gradients; 1 keeps runs bit-reproducible.
    #[arg(long)]
    workers: Option<usize>,
    /// Digit pair as `a,b`; `a` becomes class 0.
    #[arg(long)]
    digits: Option<String>,
    /// Directory holding the four MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value file; flags take precedence over its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Random cases per suite.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value = "3,6")]
    digits: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a run directory.
#[derive(Serialize)]
struct RunManifest<'a> {
    run_id: String,
    config: &'a TrainConfig,
    data_dir: String,
    out_dir: String,
    started_at: String,
    finished_at: String,
}

/// Short content hash of the resolved configuration.
fn run_id(config: &TrainConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&canonical)[..6].iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let entries = match &args.config {
        Some(p) => config::load(p)?,
        None => Vec::new(),
    };
    let flags = config::Overrides {
        mode: args.mode.map(Mode::from),
        chi: args.chi,
        output_site: args.output_site,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        optimizer: args.optimizer.map(|o| match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Rmsprop => OptimizerKind::Rmsprop,
        }),
        seed: args.seed,
        workers: args.workers,
        digits: args.digits.as_deref().map(config::parse_digits).transpose()?,
    };
    let cfg = config::resolve(&entries, &flags)?;
    let data_dir = args
        .data_dir
        .or_else(|| config::path_entry(&entries, "data_dir").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--data-dir is required".into()))?;
    let out = args
        .out
        .or_else(|| config::path_entry(&entries, "out").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;

    let started_at = now();
    let data = load_binary_mnist(&data_dir, cfg.digits)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
    if !args.quiet {
        eprintln!(
            "{} | train {} / test {} | {} params",
            cfg.mode,
            data.train.len(),
            data.test.len(),
            training::HybridModel::init(&cfg, &data.train)?.n_params()
        );
    }

    let quiet = args.quiet;
    let clock = Instant::now();
    let outcome = training::train(&cfg, &data.train, &data.test, |m| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train loss {:.4} acc {:.4}  test loss {:.4} acc {:.4}  ({:.1}s)",
                m.epoch,
                m.train_loss,
                m.train_acc,
                m.test_loss,
                m.test_acc,
                clock.elapsed().as_secs_f64()
            );
        }
    })?;

    training::write_metrics_csv(out.join(METRICS_FILE), &outcome.metrics)?;
    let summary = RunSummary::new(&cfg, &outcome.metrics, outcome.wall_seconds)
        .ok_or_else(|| CliError::Failed("no epochs were run".into()))?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    checkpoint::save(out.join(CHECKPOINT_FILE), &outcome.model)?;
    write_json(
        &out.join(MANIFEST_FILE),
        &RunManifest {
            run_id: run_id(&cfg),
            config: &cfg,
            data_dir: data_dir.display().to_string(),
            out_dir: out.display().to_string(),
            started_at,
            finished_at: now(),
        },
    )?;
    if !quiet {
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let results = gradcheck::run_all(args.trials, args.seed)?;
    let mut failed = Vec::new();
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{verdict:<4} {:<50} max error {:.3e} (tol {:.0e}, {} samples, worst at {})",
            r.name, r.max_error, r.tolerance, r.samples, r.worst
        );
        if !r.passed() {
            failed.push(format!("{}: {}", r.name, r.worst));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("tolerance exceeded at {}", failed.join("; "))))
    }
}

#[derive(Serialize)]
struct EvalReport {
    checkpoint: String,
    mode: Mode,
    split: &'static str,
    samples: usize,
    loss: f64,
    accuracy: f64,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let model = checkpoint::load(&args.checkpoint)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let data = load_split(&args.data_dir, split, config::parse_digits(&args.digits)?)?;
    let (loss, accuracy) = evaluate_with_workers(&model, &data, args.workers)?;
    let report = EvalReport {
        checkpoint: args.checkpoint.display().to_string(),
        mode: model.mode(),
        split: split.name(),
        samples: data.len(),
        loss,
        accuracy,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Failed(e.to_string()))?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tnvqc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
