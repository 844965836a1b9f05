//! Reproducible command-line runs over the segmentation pipeline: corpus
//! generation, staged training, inference, scoring, and report drawing.
//!
//! Every command reads one flat config file, derives all randomness from
//! its single seed, and writes a run manifest with checksums of everything
//! it read and wrote. Re-running a command with the same inputs and seed
//! reproduces the artifacts byte for byte.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use signseg::train::{read_config_file, FileConfig};
use signseg::Error;

mod corpus;
mod evaluate;
mod gen_data;
mod recognize;
mod report;
mod runlog;
mod segment;
mod train;

use runlog::RunLog;

#[derive(Parser)]
#[command(name = "signseg", version, about = "Skeleton-based sign language segmentation pipeline")]
struct Cli {
    /// Config file; every key has a default, so the flag is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-sequence work; 0 means all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Output directory for this run's artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pose corpus with ground-truth segments.
    GenData,
    /// Train one stage: 1 segmentation, 2 handshape, 3 fusion.
    Train {
        #[arg(long)]
        stage: u8,
        /// Directory written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Stage-1 checkpoint (required for stage 3).
        #[arg(long)]
        stage1: Option<PathBuf>,
        /// Stage-2 checkpoint (required for stage 3).
        #[arg(long)]
        stage2: Option<PathBuf>,
    },
    /// Segment pose files into per-frame labels and sign spans.
    Segment {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of pose files.
        #[arg(long)]
        poses: PathBuf,
    },
    /// Score predicted spans against ground truth.
    Evaluate {
        /// Predicted span file.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth span file.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Score gloss recognition over segments matched to ground truth.
    Recognize {
        /// Predicted span file (typically evaluate's matched output).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth span file for the same corpus.
        #[arg(long)]
        gt: PathBuf,
        /// Pose files for the corpus the spans describe.
        #[arg(long)]
        poses: PathBuf,
        /// gen-data directory of the training corpus; supplies the gloss
        /// manifest and, when no checkpoint is given, the classifier's
        /// training examples.
        #[arg(long)]
        train_data: PathBuf,
        /// Trained gloss classifier checkpoint; omitted means train one.
        #[arg(long)]
        recognizer: Option<PathBuf>,
    },
    /// Redraw timelines and summarize span files without rescoring.
    Report {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

/// Exit code classes: 0 success, 2 config, 3 data, 4 missing prerequisite.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Prerequisite(_) => 4,
        _ => 3,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::GenData => "gen-data",
        Command::Train { .. } => "train",
        Command::Segment { .. } => "segment",
        Command::Evaluate { .. } => "evaluate",
        Command::Recognize { .. } => "recognize",
        Command::Report { .. } => "report",
    }
}

fn load_config(cli: &Cli) -> signseg::Result<FileConfig> {
    let mut cfg = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => FileConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(cli: Cli) -> signseg::Result<()> {
    let cfg = load_config(&cli)?;
    let threads = resolve_threads(cli.threads);
    std::fs::create_dir_all(&cli.out)?;
    let mut log = RunLog::new(command_name(&cli.command), cfg.seed, threads, &cfg.to_text());
    if let Some(path) = &cli.config {
        log.input(path)?;
    }

    match &cli.command {
        Command::GenData => gen_data::run(&cfg, &cli.out, &mut log)?,
        Command::Train { stage, data, stage1, stage2 } => {
            train::run(&cfg, *stage, data, stage1.as_deref(), stage2.as_deref(), &cli.out, &mut log)?
        }
        Command::Segment { checkpoint, poses } => {
            segment::run(&cfg, checkpoint, poses, threads, &cli.out, &mut log)?
        }
        Command::Evaluate { pred, gt } => evaluate::run(&cfg, pred, gt, &cli.out, &mut log)?,
        Command::Recognize { pred, gt, poses, train_data, recognizer } => recognize::run(
            &cfg,
            pred,
            gt,
            poses,
            train_data,
            recognizer.as_deref(),
            &cli.out,
            &mut log,
        )?,
        Command::Report { pred, gt } => report::run(pred, gt, &cli.out, &mut log)?,
    }

    log.write(&cli.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_code(&err))
        }
    }
}
