use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use wuyun_cli::config::{load, Overrides, WORK_DIR_ENV};
use wuyun_cli::error::{config, Result};
use wuyun_cli::stages::{self, Ctx, TTestRequest};
use wuyun_core::skeleton::Strategy;

/// Skeleton-guided melody generation pipeline.
///
/// Exit codes: 0 success, 2 bad configuration or usage, 3 missing input or
/// artifact, 4 malformed data, 5 numerical failure.
#[derive(Parser)]
#[command(name = "wuyun", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Config file (JSON object or `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Work directory; overrides WUYUN_WORK_DIR and the config file.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set lm.n_layers=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Read MIDI files or score JSON documents from the input directory.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Quantize, segment and filter ingested scores.
    Preprocess {
        /// Where to write the per-segment report CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        estimate_key: bool,
    },
    /// Per-note tonal tension of every clean piece.
    Tension,
    /// Annotate skeleton notes with one strategy.
    Extract {
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Encode skeletons and melodies as token sequences.
    Tokenize {
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Decode a token text file to score JSON or MIDI (by extension).
    Detokenize {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the skeleton language model.
    TrainSkeleton(TrainArgs),
    /// Train the skeleton-conditioned inpainting model.
    TrainInpaint(TrainArgs),
    /// Generate melodies from sampled or real skeletons.
    Generate {
        /// Condition on the reference skeletons instead of sampled ones.
        #[arg(long)]
        real_skeleton: bool,
        /// Copy reference chords instead of sampling them.
        #[arg(long)]
        copy_chords: bool,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        max_bars: Option<u32>,
        #[arg(long)]
        prompt_bars: Option<u32>,
    },
    /// Overlapped-area features and skeleton statistics.
    Evaluate {
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Restrict skeleton statistics to one strategy.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// One-tailed t-tests over a listening-test ratings CSV.
    Ttest {
        ratings: PathBuf,
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        /// Pair the systems by per-rater mean score.
        #[arg(long)]
        paired: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage enabled under `stages`.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the effective configuration and its hash.
    Config,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<u64>,
    /// Continue from the existing checkpoint.
    #[arg(long)]
    resume: bool,
}

fn flag<T: Into<Value>>(flags: &mut Vec<(String, Value)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        flags.push((key.to_string(), v.into()));
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let g = &cli.global;
    let mut flags = Vec::new();
    flag(&mut flags, "work_dir", g.work_dir.as_ref().map(|p| p.display().to_string()));
    flag(&mut flags, "seed", g.seed);
    match &cli.command {
        Command::Ingest { input } | Command::Run { input } => {
            flag(&mut flags, "input", input.as_ref().map(|p| p.display().to_string()))
        }
        Command::Preprocess { estimate_key, .. } => flag(&mut flags, "estimate_key", estimate_key.then_some(true)),
        Command::Extract { strategy } | Command::Tokenize { strategy } => {
            flag(&mut flags, "strategy", strategy.clone())
        }
        Command::TrainSkeleton(t) => flag(&mut flags, "train_lm.steps", t.steps),
        Command::TrainInpaint(t) => flag(&mut flags, "train_inpaint.steps", t.steps),
        Command::Generate { real_skeleton, copy_chords, count, max_bars, prompt_bars } => {
            flag(&mut flags, "real_skeleton", real_skeleton.then_some(true));
            flag(&mut flags, "copy_chords", copy_chords.then_some(true));
            flag(&mut flags, "count", *count);
            flag(&mut flags, "sampler.max_bars", *max_bars);
            flag(&mut flags, "prompt_bars", *prompt_bars);
        }
        _ => {}
    }
    Overrides {
        file: g.config.clone(),
        env_work_dir: std::env::var_os(WORK_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        sets: g.sets.clone(),
        flags,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(load(&overrides(&cli))?);
    let line = match &cli.command {
        Command::Ingest { .. } => stages::ingest(&ctx)?,
        Command::Preprocess { report, .. } => stages::preprocess(&ctx, report.as_deref())?,
        Command::Tension => stages::tension(&ctx)?,
        Command::Extract { .. } => stages::extract(&ctx)?,
        Command::Tokenize { .. } => stages::tokenize_stage(&ctx)?,
        Command::Detokenize { input, out } => stages::detokenize_file(&ctx, input, out.as_deref())?,
        Command::TrainSkeleton(t) => stages::train_skeleton(&ctx, t.resume)?,
        Command::TrainInpaint(t) => stages::train_inpaint(&ctx, t.resume)?,
        Command::Generate { .. } => stages::generate(&ctx)?,
        Command::Evaluate { generated, reference, strategy } => {
            let strategy: Option<Strategy> =
                strategy.as_deref().map(str::parse).transpose().map_err(|e| config(format!("strategy: {e}")))?;
            stages::evaluate(&ctx, generated.as_deref(), reference.as_deref(), strategy)?
        }
        Command::Ttest { ratings, a, b, metric, paired, out } => {
            let req = TTestRequest { a: a.as_deref(), b: b.as_deref(), metric: metric.as_deref(), paired: *paired };
            stages::ttest(&ctx, ratings, &req, out.as_deref())?
        }
        Command::Run { .. } => {
            stages::run_all(&ctx)?;
            return Ok(());
        }
        Command::Config => {
            let json = serde_json::to_string_pretty(&ctx.cfg).map_err(|e| config(e.to_string()))?;
            format!("{json}\nconfig_hash = {}", ctx.hash)
        }
    };
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wuyun: {e}");
            ExitCode::from(e.kind.code())
        }
    }
}
