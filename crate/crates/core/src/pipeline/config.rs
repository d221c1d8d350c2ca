//! Run configuration and its flat `key = value` file format.
//!
//! Keys are the field names of [`RunConfig`], [`EngineConfig`] and
//! [`PreprocessConfig`]. Confidence thresholds use `confidence_threshold` and
//! `confidence_threshold_<class>`; tiles are written `8x8`. Blank lines and
//! lines starting with `#` are ignored.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::PipelineError;
use crate::detection::ClassLabel;
use crate::engine::EngineConfig;
use crate::ocr::ConfusionMap;
use crate::preprocess::{MorphOp, PreprocessConfig};

/// Source of event timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub preprocess: PreprocessConfig,
    /// Frames within which a repeated violation is not logged again; 0 disables.
    pub dedup_window: u64,
    pub output_dir: PathBuf,
    pub clock: Clock,
    /// Fail on detections for frames that have no image.
    pub strict: bool,
    pub confusions: ConfusionMap,
    /// Glyph atlas strip; the built-in atlas when absent.
    pub atlas: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            preprocess: PreprocessConfig::default(),
            dedup_window: 50,
            output_dir: PathBuf::from("out"),
            clock: Clock::System,
            strict: false,
            confusions: ConfusionMap::extended(),
            atlas: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(PipelineError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// Parses `WxH`, e.g. `8x8`.
fn parse_pair(key: &str, value: &str) -> Result<(u32, u32), PipelineError> {
    let (a, b) = value
        .split_once(['x', 'X'])
        .ok_or_else(|| PipelineError::Config(format!("{key}: expected WxH, got {value:?}")))?;
    Ok((parse_num(key, a.trim())?, parse_num(key, b.trim())?))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let e = &mut self.engine;
        let p = &mut self.preprocess;
        match key {
            "confidence_threshold" => e.confidence.global = parse_num(key, value)?,
            "min_mirrors" => e.min_mirrors = parse_num(key, value)?,
            "head_region_up" => e.head_region_up = parse_num(key, value)?,
            "head_region_down" => e.head_region_down = parse_num(key, value)?,
            "mirror_region_horizontal" => e.mirror_region_horizontal = parse_num(key, value)?,
            "mirror_region_vertical_upper" => e.mirror_region_vertical_upper = parse_num(key, value)?,
            "plate_distance_factor" => e.plate_distance_factor = parse_num(key, value)?,
            "bilateral_radius" => p.bilateral_radius = parse_num(key, value)?,
            "sigma_space" => p.sigma_space = parse_num(key, value)?,
            "sigma_color" => p.sigma_color = parse_num(key, value)?,
            "clahe_clip" => p.clahe_clip = parse_num(key, value)?,
            "clahe_tiles" => p.clahe_tiles = parse_pair(key, value)?,
            "binarize_contrast_threshold" => p.binarize_contrast_threshold = parse_num(key, value)?,
            "adaptive_block" => p.adaptive_block = parse_num(key, value)?,
            "adaptive_c" => p.adaptive_c = parse_num(key, value)?,
            "morph_kernel" => p.morph_kernel = parse_num(key, value)?,
            "morph_op" => {
                p.morph_op = match value {
                    "opening" => MorphOp::Opening,
                    "closing" => MorphOp::Closing,
                    _ => return Err(PipelineError::Config(format!("{key}: expected opening or closing"))),
                }
            }
            "dedup_window" => self.dedup_window = parse_num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "strict" => self.strict = parse_bool(key, value)?,
            "ocr_confusions" => {
                self.confusions = match value {
                    "extended" => ConfusionMap::extended(),
                    "basic" => ConfusionMap::basic(),
                    _ => return Err(PipelineError::Config(format!("{key}: expected extended or basic"))),
                }
            }
            "atlas" => self.atlas = Some(PathBuf::from(value)),
            _ => {
                let class = key
                    .strip_prefix("confidence_threshold_")
                    .and_then(|c| c.parse::<ClassLabel>().ok())
                    .ok_or_else(|| PipelineError::Config(format!("unknown key {key:?}")))?;
                e.confidence.per_class.insert(class, parse_num(key, value)?);
            }
        }
        Ok(())
    }

    /// Defaults overridden by every setting in `text`.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| {
                let msg = match e {
                    PipelineError::Config(m) => m,
                    other => other.to_string(),
                };
                PipelineError::Config(format!("line {}: {msg}", i + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.engine.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.preprocess.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}
