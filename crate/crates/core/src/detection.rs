//! Class taxonomy and the line-delimited detections wire format.
//!
//! A detections file starts with a header line
//! `{"format":"plateguard-detections-v1","width":W,"height":H}` followed by one
//! record per line:
//! `{"frame_id":n,"class":"<label>","bbox":[x1,y1,x2,y2],"confidence":c}`.
//! Records must be sorted by `frame_id` (non-decreasing).

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

pub const FORMAT_TAG: &str = "plateguard-detections-v1";

/// Operating point of the detector's F1-confidence curve.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.610;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: unknown class {label:?}")]
    UnknownClass { line: usize, label: String },
    #[error("line {line}: invalid geometry {bbox:?}")]
    InvalidGeometry { line: usize, bbox: [f64; 4] },
    #[error("line {line}: confidence {value} outside [0, 1]")]
    InvalidConfidence { line: usize, value: f64 },
    #[error("line {line}: frame_id {frame_id} follows frame_id {previous}; records must be sorted")]
    UnsortedFrames {
        line: usize,
        frame_id: u64,
        previous: u64,
    },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Bike,
    Helmet,
    NoHelmet,
    Mirror,
    NumberPlate,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Bike,
        ClassLabel::Helmet,
        ClassLabel::NoHelmet,
        ClassLabel::Mirror,
        ClassLabel::NumberPlate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Bike => "bike",
            ClassLabel::Helmet => "helmet",
            ClassLabel::NoHelmet => "no_helmet",
            ClassLabel::Mirror => "mirror",
            ClassLabel::NumberPlate => "number_plate",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// One detected object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: u64,
    pub class: ClassLabel,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(frame_id: u64, class: ClassLabel, bbox: BBox, confidence: f64) -> Self {
        Self {
            frame_id,
            class,
            bbox,
            confidence,
        }
    }

    /// The record in wire format, without a trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("detections always serialize")
    }
}

/// All detections of one frame, in file order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDetections {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn new(frame_id: u64, width: u32, height: u32) -> Self {
        Self {
            frame_id,
            width,
            height,
            detections: Vec::new(),
        }
    }

    pub fn frame_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn of_class(&self, class: ClassLabel) -> impl Iterator<Item = &Detection> {
        self.detections.iter().filter(move |d| d.class == class)
    }
}

/// Global confidence threshold with optional per-class overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceThresholds {
    pub global: f64,
    pub per_class: BTreeMap<ClassLabel, f64>,
}

impl Default for ConfidenceThresholds {
    fn default() -> Self {
        Self::global(DEFAULT_CONFIDENCE_THRESHOLD)
    }
}

impl ConfidenceThresholds {
    pub fn global(threshold: f64) -> Self {
        Self {
            global: threshold,
            per_class: BTreeMap::new(),
        }
    }

    pub fn for_class(&self, class: ClassLabel) -> f64 {
        self.per_class.get(&class).copied().unwrap_or(self.global)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    frame_id: u64,
    class: String,
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub width: u32,
    pub height: u32,
}

impl Header {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            format: FORMAT_TAG.to_string(),
            width,
            height,
        }
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<Detection, DetectionError> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| DetectionError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
    let class = raw
        .class
        .parse::<ClassLabel>()
        .map_err(|label| DetectionError::UnknownClass {
            line: line_no,
            label,
        })?;
    let [x1, y1, x2, y2] = raw.bbox;
    let bbox = BBox::new(x1, y1, x2, y2).map_err(|_| DetectionError::InvalidGeometry {
        line: line_no,
        bbox: raw.bbox,
    })?;
    if !(0.0..=1.0).contains(&raw.confidence) {
        return Err(DetectionError::InvalidConfidence {
            line: line_no,
            value: raw.confidence,
        });
    }
    Ok(Detection::new(raw.frame_id, class, bbox, raw.confidence))
}

/// Parses one record line into a validated detection.
pub fn parse_detection_line(line: &str) -> Result<Detection, DetectionError> {
    parse_record(line, 1)
}

/// Keeps detections whose confidence is at least the threshold, in order.
pub fn filter_by_confidence(dets: &FrameDetections, threshold: f64) -> FrameDetections {
    filter_by_thresholds(dets, &ConfidenceThresholds::global(threshold))
}

pub fn filter_by_thresholds(dets: &FrameDetections, th: &ConfidenceThresholds) -> FrameDetections {
    FrameDetections {
        frame_id: dets.frame_id,
        width: dets.width,
        height: dets.height,
        detections: dets
            .detections
            .iter()
            .filter(|d| d.confidence >= th.for_class(d.class))
            .cloned()
            .collect(),
    }
}

/// Streams a detections file frame by frame.
///
/// Boxes extending past the declared frame are clipped on ingest; a box lying
/// entirely outside is an `InvalidGeometry` error.
pub struct DetectionReader<R> {
    lines: std::io::Lines<R>,
    header: Option<Header>,
    line_no: usize,
    pending: Option<Detection>,
    last_frame: Option<u64>,
    failed: bool,
}

impl<R: BufRead> DetectionReader<R> {
    /// Reads the header. A completely empty input yields a reader with no
    /// header and no frames.
    pub fn new(reader: R) -> Result<Self, DetectionError> {
        let mut lines = reader.lines();
        let mut line_no = 0;
        let mut header = None;
        for line in lines.by_ref() {
            line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let h: Header = serde_json::from_str(&line)
                .map_err(|e| DetectionError::BadHeader(e.to_string()))?;
            if h.format != FORMAT_TAG {
                return Err(DetectionError::BadHeader(format!(
                    "unsupported format {:?}",
                    h.format
                )));
            }
            if h.width == 0 || h.height == 0 {
                return Err(DetectionError::BadHeader("zero frame dimension".into()));
            }
            header = Some(h);
            break;
        }
        Ok(Self {
            lines,
            header,
            line_no,
            pending: None,
            last_frame: None,
            failed: false,
        })
    }

    pub fn header(&self) -> Option<&Header> {
        self.header.as_ref()
    }

    fn next_detection(&mut self) -> Result<Option<Detection>, DetectionError> {
        let Some(header) = self.header.clone() else {
            return Ok(None);
        };
        for line in self.lines.by_ref() {
            self.line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut det = parse_record(&line, self.line_no)?;
            if let Some(prev) = self.last_frame {
                if det.frame_id < prev {
                    return Err(DetectionError::UnsortedFrames {
                        line: self.line_no,
                        frame_id: det.frame_id,
                        previous: prev,
                    });
                }
            }
            self.last_frame = Some(det.frame_id);
            det.bbox = det.bbox.clip((header.width, header.height)).map_err(|_| {
                DetectionError::InvalidGeometry {
                    line: self.line_no,
                    bbox: det.bbox.to_array(),
                }
            })?;
            return Ok(Some(det));
        }
        Ok(None)
    }

    fn next_frame(&mut self) -> Result<Option<FrameDetections>, DetectionError> {
        let first = match self.pending.take() {
            Some(d) => d,
            None => match self.next_detection()? {
                Some(d) => d,
                None => return Ok(None),
            },
        };
        let header = self.header.as_ref().expect("detections imply a header");
        let mut frame = FrameDetections::new(first.frame_id, header.width, header.height);
        frame.detections.push(first);
        while let Some(d) = self.next_detection()? {
            if d.frame_id != frame.frame_id {
                self.pending = Some(d);
                break;
            }
            frame.detections.push(d);
        }
        Ok(Some(frame))
    }

    /// Collects every frame. Convenience for small files.
    pub fn read_all(self) -> Result<Vec<FrameDetections>, DetectionError> {
        self.collect()
    }
}

impl<R: BufRead> Iterator for DetectionReader<R> {
    type Item = Result<FrameDetections, DetectionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes the header followed by every detection of every frame.
pub fn write_detections<'a, W: Write>(
    mut out: W,
    width: u32,
    height: u32,
    frames: impl IntoIterator<Item = &'a FrameDetections>,
) -> std::io::Result<()> {
    writeln!(
        out,
        "{}",
        serde_json::to_string(&Header::new(width, height)).expect("header serializes")
    )?;
    for frame in frames {
        for d in &frame.detections {
            writeln!(out, "{}", d.to_line())?;
        }
    }
    out.flush()
}
