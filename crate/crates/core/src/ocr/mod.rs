//! Plate reading: a pluggable recognizer followed by allowlist filtering,
//! positional confusion correction and grammar parsing.

mod atlas;
mod external;
mod font;
mod grammar;

use serde::Serialize;
use thiserror::Error;

pub use atlas::{otsu_level, GlyphAtlas, ALPHABET};
pub use external::ExternalRecognizer;
pub use grammar::{
    correct_by_position, correct_by_position_with, filter_allowlist, parse_plate_format, ConfusionMap,
    FormatMismatch, PlateNumber,
};

use crate::raster::{GrayImage, RasterError};

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("image is empty")]
    EmptyImage,
    #[error("no characters found")]
    NoCharactersFound,
    #[error("invalid glyph atlas: {0}")]
    InvalidAtlas(String),
    #[error("external recognizer failed: {0}")]
    External(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One recognized character and its match score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharMatch {
    pub ch: char,
    pub score: f64,
}

/// Turns a preprocessed plate crop into characters.
pub trait Recognizer {
    fn recognize(&self, img: &GrayImage) -> Result<Vec<CharMatch>, OcrError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateReadResult {
    /// Recognized text after allowlist filtering.
    pub raw_text: String,
    pub corrected_text: String,
    pub parsed: Option<PlateNumber>,
    /// One score per character of `raw_text`.
    pub char_scores: Vec<f64>,
    pub parse_ok: bool,
}

impl PlateReadResult {
    /// Mean character score, 0 for an empty read.
    pub fn mean_score(&self) -> f64 {
        if self.char_scores.is_empty() {
            0.0
        } else {
            self.char_scores.iter().sum::<f64>() / self.char_scores.len() as f64
        }
    }
}

/// Reads a plate with the built-in template recognizer and the extended
/// confusion map.
pub fn read_plate(img: &GrayImage, atlas: &GlyphAtlas) -> Result<PlateReadResult, OcrError> {
    read_plate_with(atlas, img, &ConfusionMap::extended())
}

pub fn read_plate_with(
    recognizer: &dyn Recognizer,
    img: &GrayImage,
    confusions: &ConfusionMap,
) -> Result<PlateReadResult, OcrError> {
    if img.is_empty() {
        return Err(OcrError::EmptyImage);
    }
    let matches = recognizer.recognize(img)?;
    let (mut raw_text, mut char_scores) = (String::new(), Vec::new());
    for m in matches {
        // filter per character so scores stay aligned with the text
        let kept = filter_allowlist(m.ch.encode_utf8(&mut [0; 4]));
        for c in kept.chars() {
            raw_text.push(c);
            char_scores.push(m.score);
        }
    }
    if raw_text.is_empty() {
        return Err(OcrError::NoCharactersFound);
    }
    let (corrected_text, _) = correct_by_position_with(&raw_text, confusions);
    let parsed = parse_plate_format(&corrected_text).ok();
    Ok(PlateReadResult {
        raw_text,
        corrected_text,
        parse_ok: parsed.is_some(),
        parsed,
        char_scores,
    })
}
