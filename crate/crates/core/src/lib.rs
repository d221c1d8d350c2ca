//! Traffic violation pipeline engine.
//!
//! Turns per-frame object detections (bike, helmet, no-helmet, mirror,
//! number plate) into flagged helmet and mirror violations, reads the plates
//! of violating bikes with a preprocessing + template OCR pipeline, logs the
//! results and evaluates detection and OCR quality.

pub mod detection;
pub mod engine;
pub mod geometry;
pub mod metrics;
pub mod ocr;
pub mod pipeline;
pub mod preprocess;
pub mod raster;
pub mod synth;
