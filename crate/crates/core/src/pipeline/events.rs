//! Violation events and the CSV log.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::PipelineError;
use crate::engine::ViolationKind;
use crate::geometry::BBox;

/// Column order of the log.
pub const CSV_HEADER: [&str; 11] = [
    "timestamp",
    "frame_id",
    "violation_type",
    "plate_text",
    "plate_parsed",
    "plate_confidence",
    "bike_x1",
    "bike_y1",
    "bike_x2",
    "bike_y2",
    "snapshot_path",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationEvent {
    /// ISO-8601 UTC.
    pub timestamp: String,
    pub frame_id: u64,
    pub violation_type: ViolationKind,
    /// Corrected plate text, empty when no plate was read.
    pub plate_text: String,
    pub plate_parsed: bool,
    /// Mean character score, 0 without a plate.
    pub plate_confidence: f64,
    pub bike_bbox: BBox,
    /// Relative to the output directory, empty when no snapshot was written.
    pub snapshot_path: String,
}

impl ViolationEvent {
    fn to_record(&self) -> [String; 11] {
        let [x1, y1, x2, y2] = self.bike_bbox.to_array();
        [
            self.timestamp.clone(),
            self.frame_id.to_string(),
            self.violation_type.as_str().to_string(),
            self.plate_text.clone(),
            self.plate_parsed.to_string(),
            self.plate_confidence.to_string(),
            x1.to_string(),
            y1.to_string(),
            x2.to_string(),
            y2.to_string(),
            self.snapshot_path.clone(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, row: usize) -> Result<Self, PipelineError> {
        let bad = |what: &str| PipelineError::Csv(format!("row {row}: bad {what}"));
        if rec.len() != CSV_HEADER.len() {
            return Err(PipelineError::Csv(format!("row {row}: expected 11 fields, got {}", rec.len())));
        }
        let f = |i: usize| -> Result<f64, PipelineError> { rec[i].parse().map_err(|_| bad(CSV_HEADER[i])) };
        Ok(Self {
            timestamp: rec[0].to_string(),
            frame_id: rec[1].parse().map_err(|_| bad("frame_id"))?,
            violation_type: rec[2].parse().map_err(|_| bad("violation_type"))?,
            plate_text: rec[3].to_string(),
            plate_parsed: rec[4].parse().map_err(|_| bad("plate_parsed"))?,
            plate_confidence: f(5)?,
            bike_bbox: BBox::new(f(6)?, f(7)?, f(8)?, f(9)?).map_err(|_| bad("bike box"))?,
            snapshot_path: rec[10].to_string(),
        })
    }
}

/// Append-only CSV sink; every row is flushed before `log` returns.
pub struct EventLog<W: Write> {
    writer: csv::Writer<W>,
    rows: usize,
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

impl EventLog<BufWriter<File>> {
    /// Creates (truncating) the log file and writes the header.
    pub fn create(path: &Path) -> Result<Self, PipelineError> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> EventLog<W> {
    pub fn new(out: W) -> Result<Self, PipelineError> {
        let mut writer = csv_writer(out);
        writer.write_record(CSV_HEADER)?;
        writer.flush()?;
        Ok(Self { writer, rows: 0 })
    }

    pub fn log(&mut self, event: &ViolationEvent) -> Result<(), PipelineError> {
        self.writer.write_record(event.to_record())?;
        self.writer.flush()?;
        self.rows += 1;
        Ok(())
    }

    /// Rows written, excluding the header.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn into_inner(self) -> Result<W, PipelineError> {
        self.writer
            .into_inner()
            .map_err(|e| PipelineError::Io(e.into_error()))
    }
}

/// Parses a log written by [`EventLog`], checking the header.
pub fn read_events<R: Read>(input: R) -> Result<Vec<ViolationEvent>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers()?.clone();
    if !header.iter().eq(CSV_HEADER) {
        return Err(PipelineError::Csv(format!("unexpected header {:?}", header)));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| ViolationEvent::from_record(&rec?, i + 1))
        .collect()
}

pub fn read_event_file(path: &Path) -> Result<Vec<ViolationEvent>, PipelineError> {
    read_events(File::open(path)?)
}
