//! Suppression of repeated violations across nearby frames.

use std::collections::HashMap;

use crate::engine::ViolationKind;
use crate::geometry::BBox;

/// Side of the grid used to key events without plate text.
pub const CELL_SIZE: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DedupKey {
    Plate(ViolationKind, String),
    Cell(ViolationKind, i64, i64),
}

impl DedupKey {
    /// Keyed by plate text, or by the bike center's grid cell when the text is empty.
    pub fn new(kind: ViolationKind, plate_text: &str, bike: &BBox) -> Self {
        if plate_text.is_empty() {
            let (cx, cy) = bike.center();
            DedupKey::Cell(kind, (cx / CELL_SIZE).floor() as i64, (cy / CELL_SIZE).floor() as i64)
        } else {
            DedupKey::Plate(kind, plate_text.to_string())
        }
    }
}

/// Remembers the frame each key was last logged at.
#[derive(Debug, Clone)]
pub struct Deduper {
    window: u64,
    last_logged: HashMap<DedupKey, u64>,
}

impl Deduper {
    pub fn new(window: u64) -> Self {
        Self {
            window,
            last_logged: HashMap::new(),
        }
    }

    /// True if the event should be logged. The same key logged fewer than
    /// `window` frames earlier drops it; kept events are recorded.
    pub fn admit(&mut self, key: DedupKey, frame_id: u64) -> bool {
        if self.window == 0 {
            return true;
        }
        if let Some(&last) = self.last_logged.get(&key) {
            if frame_id.saturating_sub(last) < self.window {
                return false;
            }
        }
        self.last_logged.insert(key, frame_id);
        true
    }
}
