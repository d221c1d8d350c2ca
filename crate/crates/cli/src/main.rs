use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use plateguard::detection::{DetectionReader, DEFAULT_CONFIDENCE_THRESHOLD};
use plateguard::metrics::{map_suite, run_ablation};
use plateguard::ocr::{ExternalRecognizer, GlyphAtlas, Recognizer};
use plateguard::pipeline::{self, Clock, RunConfig};
use plateguard::synth::{degraded_corpus, read_plate_corpus, write_plate_corpus, write_scene_corpus};

#[derive(Parser)]
#[command(name = "plateguard", version, about = "Helmet and mirror violation logging with plate OCR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a detections stream, read plates and log violations.
    Process(ProcessArgs),
    /// OCR accuracy after each preprocessing stage on a plate corpus.
    Ablate(AblateArgs),
    /// Precision, recall and mAP of predictions against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic corpus.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Args)]
struct ProcessArgs {
    /// Directory of frame images named by frame number.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stamp every event with this ISO-8601 time instead of the wall clock.
    #[arg(long)]
    fixed_clock: Option<String>,
    /// External OCR program speaking the line protocol, e.g. "python3 ocr.py".
    #[arg(long)]
    ocr_command: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    /// Corpus directory holding plates/NNN.png and plates/NNN.txt.
    #[arg(long)]
    corpus: PathBuf,
    /// Line-delimited JSON rows.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Line-delimited JSON report; defaults to <pred stem>.metrics.jsonl next to --pred.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence cut for precision and recall (AP uses every prediction).
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    conf: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Degraded plate images with ground-truth text.
    Plates(SynthArgs),
    /// Detection scenes, ground-truth violations and rendered frames.
    Scenes {
        #[command(flatten)]
        common: SynthArgs,
        #[arg(long, default_value_t = 1280)]
        width: u32,
        #[arg(long, default_value_t = 720)]
        height: u32,
        #[arg(long, default_value_t = 2)]
        max_bikes: usize,
    },
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("PLATEGUARD_LOG").as_deref() {
        Err(_) | Ok("") => LevelFilter::Warn,
        Ok("quiet") => LevelFilter::Error,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        Ok(other) => bail!("PLATEGUARD_LOG must be quiet, info or debug, got {other:?}"),
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn load_atlas(cfg: &RunConfig) -> Result<GlyphAtlas> {
    match &cfg.atlas {
        Some(p) => GlyphAtlas::load(p).with_context(|| format!("loading atlas {}", p.display())),
        None => Ok(GlyphAtlas::builtin()),
    }
}

fn process(args: ProcessArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    cfg.output_dir = args.out;
    if let Some(t) = &args.fixed_clock {
        let t = DateTime::parse_from_rfc3339(t).with_context(|| format!("--fixed-clock {t:?}"))?;
        cfg.clock = Clock::Fixed(t.with_timezone(&Utc));
    }
    let recognizer: Box<dyn Recognizer> = match &args.ocr_command {
        Some(cmd) => {
            let mut parts = cmd.split_whitespace().map(String::from);
            let program = parts.next().context("--ocr-command is empty")?;
            Box::new(ExternalRecognizer::spawn(&program, &parts.collect::<Vec<_>>())?)
        }
        None => Box::new(load_atlas(&cfg)?),
    };
    let summary = pipeline::run_with(&args.frames, &args.detections, recognizer.as_ref(), &cfg)?;
    println!(
        "frames {}  flagged {}  logged {}  elapsed {:.3}s  fps {:.1}",
        summary.frames_processed, summary.violations_flagged, summary.violations_logged, summary.elapsed_secs, summary.fps
    );
    Ok(())
}

fn ablate(args: AblateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let atlas = load_atlas(&cfg)?;
    let corpus = read_plate_corpus(&args.corpus).with_context(|| format!("reading {}", args.corpus.display()))?;
    let rows = run_ablation(&corpus, &atlas, &cfg.preprocess)?;
    let mut out = BufWriter::new(fs::File::create(&args.out)?);
    println!("{:<28} {:>8}", "stage", "accuracy");
    for r in &rows {
        println!("{:<28} {:>7.1}%", r.stage_name, 100.0 * r.accuracy);
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    out.flush()?;
    Ok(())
}

fn read_frames(path: &Path) -> Result<Vec<plateguard::detection::FrameDetections>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(DetectionReader::new(BufReader::new(file))?.read_all()?)
}

fn eval(args: EvalArgs) -> Result<()> {
    let preds = read_frames(&args.pred)?;
    let truth = read_frames(&args.truth)?;
    let report = map_suite(&preds, &truth, args.conf);
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{:<14} {:>6} {:>6} {:>9} {:>9} {:>9} {:>10}",
        "class", "truth", "pred", "precision", "recall", "AP@.50", "AP@.50-.95"
    );
    for c in &report.classes {
        println!(
            "{:<14} {:>6} {:>6} {:>9.4} {:>9.4} {:>9} {:>10}",
            c.class.as_str(),
            c.n_truth,
            c.n_pred,
            c.precision,
            c.recall,
            fmt(c.ap50),
            fmt(c.ap50_95)
        );
    }
    println!("mAP@.50 {}  mAP@.50-.95 {}", fmt(report.map50), fmt(report.map50_95));

    let out = args.out.unwrap_or_else(|| {
        let stem = args.pred.file_stem().and_then(|s| s.to_str()).unwrap_or("pred");
        args.pred.with_file_name(format!("{stem}.metrics.jsonl"))
    });
    let mut w = BufWriter::new(fs::File::create(&out)?);
    for c in &report.classes {
        writeln!(w, "{}", serde_json::to_string(c)?)?;
    }
    writeln!(
        w,
        "{}",
        serde_json::json!({"map50": report.map50, "map50_95": report.map50_95, "confidence": args.conf})
    )?;
    w.flush()?;
    Ok(())
}

fn synth(kind: SynthKind) -> Result<()> {
    let atlas = GlyphAtlas::builtin();
    match kind {
        SynthKind::Plates(a) => {
            let corpus = degraded_corpus(a.seed, a.n, &atlas);
            write_plate_corpus(&a.out, &corpus)?;
            println!("wrote {} plates to {}", corpus.len(), a.out.join("plates").display());
        }
        SynthKind::Scenes {
            common: a,
            width,
            height,
            max_bikes,
        } => {
            let scenes = write_scene_corpus(&a.out, a.n, a.seed, (width, height), max_bikes, &atlas)?;
            let flags: usize = scenes.iter().map(|s| s.truth.len()).sum();
            println!("wrote {} scenes with {flags} violations to {}", scenes.len(), a.out.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    init_logging()?;
    match Cli::parse().command {
        Command::Process(a) => process(a),
        Command::Ablate(a) => ablate(a),
        Command::Eval(a) => eval(a),
        Command::Synth { kind } => synth(kind),
    }
}
