//! The frame loop: evaluate detections, read plates of violating bikes,
//! deduplicate, log events with snapshots and write annotated frames.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! violations.csv
//! snapshots/{frame_id}_{violation_type}_{seq}.png
//! annotated/{frame_id:06}.png
//! ```

mod annotate;
mod config;
mod dedup;
mod events;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::SecondsFormat;
use log::{debug, info, warn};
use serde::Serialize;
use thiserror::Error;

pub use annotate::{annotate_frame, class_color, draw_outline, VIOLATION_COLOR};
pub use config::{Clock, RunConfig};
pub use dedup::{DedupKey, Deduper, CELL_SIZE};
pub use events::{read_event_file, read_events, EventLog, ViolationEvent, CSV_HEADER};

use crate::detection::{filter_by_thresholds, DetectionError, DetectionReader, FrameDetections};
use crate::engine::{evaluate_frame, FrameVerdict};
use crate::ocr::{read_plate_with, GlyphAtlas, OcrError, PlateReadResult, Recognizer};
use crate::preprocess::preprocess_plate;
use crate::raster::{RasterError, RgbImage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("detections reference frame {frame_id}, which has no image")]
    InputMismatch { frame_id: u64 },
    #[error("csv error: {0}")]
    Csv(String),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => PipelineError::Io(io),
            other => PipelineError::Csv(format!("{other:?}")),
        }
    }
}

pub const LOG_FILE: &str = "violations.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const ANNOTATED_DIR: &str = "annotated";
/// Snapshot crops grow the bike box by this fraction of its size on each side.
pub const SNAPSHOT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub frames_processed: u64,
    pub violations_flagged: u64,
    pub violations_logged: u64,
    pub elapsed_secs: f64,
    pub fps: f64,
}

/// Frame images keyed by the numeric stem of their file name (`000042.png` is frame 42).
pub fn index_frames(dir: &Path) -> Result<BTreeMap<u64, PathBuf>, PipelineError> {
    let mut frames = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "ppm" | "pgm" | "pnm")) {
            continue;
        }
        match path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) {
            Some(id) => {
                if let Some(prev) = frames.insert(id, path.clone()) {
                    warn!("frame {id}: {} shadows {}", path.display(), prev.display());
                }
            }
            None => debug!("skipping {}: stem is not a frame number", path.display()),
        }
    }
    Ok(frames)
}

fn read_plate_of(
    verdict: &FrameVerdict,
    image: Option<&RgbImage>,
    recognizer: &dyn Recognizer,
    cfg: &RunConfig,
) -> Option<PlateReadResult> {
    let plate = verdict.group.plate.as_ref()?;
    let image = image?;
    let (x0, y0, x1, y1) = plate.bbox.pixel_bounds();
    let crop = image.crop(x0, y0, x1, y1).ok()?;
    let pre = match preprocess_plate(&crop, &cfg.preprocess) {
        Ok((img, _)) => img,
        Err(e) => {
            debug!("frame {}: plate not preprocessed: {e}", plate.frame_id);
            return None;
        }
    };
    match read_plate_with(recognizer, &pre, &cfg.confusions) {
        Ok(r) => Some(r),
        Err(e) => {
            debug!("frame {}: plate not read: {e}", plate.frame_id);
            None
        }
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    recognizer: &'a dyn Recognizer,
    log: EventLog<std::io::BufWriter<fs::File>>,
    dedup: Deduper,
    seq: u64,
    flagged: u64,
}

impl Run<'_> {
    fn frame(&mut self, frame_id: u64, dets: Option<FrameDetections>, image_path: Option<&Path>) -> Result<(), PipelineError> {
        if image_path.is_none() && self.cfg.strict {
            return Err(PipelineError::InputMismatch { frame_id });
        }
        let image = image_path.map(RgbImage::load).transpose()?;
        let (verdicts, kept) = match &dets {
            Some(d) => (evaluate_frame(d, &self.cfg.engine), filter_by_thresholds(d, &self.cfg.engine.confidence).detections),
            None => (Vec::new(), Vec::new()),
        };
        let flags: Vec<_> = verdicts.iter().flat_map(|v| v.flags.iter().cloned()).collect();
        let annotated = image.as_ref().map(|img| annotate_frame(img, &kept, &flags));

        for verdict in verdicts.iter().filter(|v| !v.flags.is_empty()) {
            let plate = read_plate_of(verdict, image.as_ref(), self.recognizer, self.cfg);
            for flag in &verdict.flags {
                self.flagged += 1;
                let text = plate.as_ref().map(|p| p.corrected_text.clone()).unwrap_or_default();
                if !self.dedup.admit(DedupKey::new(flag.kind, &text, &flag.bike_bbox), frame_id) {
                    debug!("frame {frame_id}: duplicate {} {text:?} dropped", flag.kind);
                    continue;
                }
                self.seq += 1;
                let snapshot_path = match &annotated {
                    Some(img) => {
                        let rel = format!("{SNAPSHOT_DIR}/{frame_id}_{}_{}.png", flag.kind, self.seq);
                        let m = SNAPSHOT_MARGIN;
                        let b = flag.bike_bbox.expand(m, m, m, m, (img.width(), img.height()))
                            .unwrap_or(flag.bike_bbox);
                        let (x0, y0, x1, y1) = b.pixel_bounds();
                        img.crop(x0, y0, x1, y1)?.save_png(self.cfg.output_dir.join(&rel))?;
                        rel
                    }
                    None => String::new(),
                };
                let event = ViolationEvent {
                    timestamp: self.cfg.clock.now().to_rfc3339_opts(SecondsFormat::AutoSi, true),
                    frame_id,
                    violation_type: flag.kind,
                    plate_parsed: plate.as_ref().is_some_and(|p| p.parse_ok),
                    plate_confidence: plate.as_ref().map_or(0.0, |p| p.mean_score()),
                    plate_text: text,
                    bike_bbox: flag.bike_bbox,
                    snapshot_path,
                };
                info!("frame {frame_id}: {} plate {:?}", event.violation_type, event.plate_text);
                self.log.log(&event)?;
            }
        }
        if let Some(img) = annotated {
            img.save_png(self.cfg.output_dir.join(ANNOTATED_DIR).join(format!("{frame_id:06}.png")))?;
        }
        Ok(())
    }
}

/// Processes every frame that has an image or detections, in frame order.
///
/// Frames with detections but no image are still evaluated and logged
/// (without plate text or snapshot) unless `cfg.strict` is set.
pub fn process_stream<R: BufRead>(
    frames: &BTreeMap<u64, PathBuf>,
    detections: R,
    recognizer: &dyn Recognizer,
    cfg: &RunConfig,
) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    fs::create_dir_all(cfg.output_dir.join(SNAPSHOT_DIR))?;
    fs::create_dir_all(cfg.output_dir.join(ANNOTATED_DIR))?;
    let mut run = Run {
        cfg,
        recognizer,
        log: EventLog::create(&cfg.output_dir.join(LOG_FILE))?,
        dedup: Deduper::new(cfg.dedup_window),
        seq: 0,
        flagged: 0,
    };
    let mut reader = DetectionReader::new(detections)?.peekable();
    let mut processed = 0u64;
    let mut images = frames.iter().peekable();
    loop {
        let next_det = match reader.peek() {
            Some(Ok(f)) => Some(f.frame_id),
            Some(Err(_)) => return Err(reader.next().expect("peeked").unwrap_err().into()),
            None => None,
        };
        let next_img = images.peek().map(|(id, _)| **id);
        let frame_id = match (next_det, next_img) {
            (None, None) => break,
            (Some(d), Some(i)) => d.min(i),
            (Some(d), None) => d,
            (None, Some(i)) => i,
        };
        let dets = if next_det == Some(frame_id) {
            reader.next().transpose()?
        } else {
            None
        };
        let path = if next_img == Some(frame_id) {
            images.next().map(|(_, p)| p.as_path())
        } else {
            None
        };
        run.frame(frame_id, dets, path)?;
        processed += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let summary = RunSummary {
        frames_processed: processed,
        violations_flagged: run.flagged,
        violations_logged: run.log.rows() as u64,
        elapsed_secs: elapsed,
        fps: if elapsed > 0.0 { processed as f64 / elapsed } else { 0.0 },
    };
    info!(
        "{} frames, {} violations logged, {:.1} fps",
        summary.frames_processed, summary.violations_logged, summary.fps
    );
    Ok(summary)
}

/// [`process_stream`] over a frames directory and a detections file, with
/// the atlas named in the config or the built-in one.
pub fn run(frames_dir: &Path, detections: &Path, cfg: &RunConfig) -> Result<RunSummary, PipelineError> {
    let atlas = match &cfg.atlas {
        Some(p) => GlyphAtlas::load(p)?,
        None => GlyphAtlas::builtin(),
    };
    run_with(frames_dir, detections, &atlas, cfg)
}

pub fn run_with(
    frames_dir: &Path,
    detections: &Path,
    recognizer: &dyn Recognizer,
    cfg: &RunConfig,
) -> Result<RunSummary, PipelineError> {
    let frames = index_frames(frames_dir)?;
    let file = std::io::BufReader::new(fs::File::open(detections)?);
    process_stream(&frames, file, recognizer, cfg)
}
