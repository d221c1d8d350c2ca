//! Axis-aligned bounding boxes and the proximity measures used for
//! associating detections: IoU, center distance and region expansion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate box [{0}, {1}, {2}, {3}]: need x1 < x2 and y1 < y2")]
    Degenerate(f64, f64, f64, f64),
    #[error("box collapsed after clipping to the frame")]
    ClippedToDegenerate,
}

/// Pixel-space box, origin top-left. Always nondegenerate: `x1 < x2`, `y1 < y2`.
///
/// Serialized as the array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        // Written so that NaN coordinates are rejected too.
        if !(x1 < x2 && y1 < y2) || !x1.is_finite() || !y2.is_finite() || !x2.is_finite() || !y1.is_finite() {
            return Err(GeometryError::Degenerate(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Intersection area divided by union area; 0 for disjoint boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        if iw <= 0.0 || ih <= 0.0 {
            return 0.0;
        }
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Euclidean distance between the two box centers.
    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    /// Grows the box by fractions of its own width (`left`, `right`) and
    /// height (`up`, `down`), then clips to `[0, width] x [0, height]`.
    pub fn expand(
        &self,
        left: f64,
        right: f64,
        up: f64,
        down: f64,
        frame: (u32, u32),
    ) -> Result<BBox, GeometryError> {
        let (w, h) = (self.width(), self.height());
        let (fw, fh) = (frame.0 as f64, frame.1 as f64);
        let x1 = (self.x1 - left * w).clamp(0.0, fw);
        let x2 = (self.x2 + right * w).clamp(0.0, fw);
        let y1 = (self.y1 - up * h).clamp(0.0, fh);
        let y2 = (self.y2 + down * h).clamp(0.0, fh);
        BBox::new(x1, y1, x2, y2).map_err(|_| GeometryError::ClippedToDegenerate)
    }

    /// Intersection with the frame rectangle.
    pub fn clip(&self, frame: (u32, u32)) -> Result<BBox, GeometryError> {
        self.expand(0.0, 0.0, 0.0, 0.0, frame)
    }

    /// Closed-interval containment of a point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    /// Integer pixel bounds `[x0, x1) x [y0, y1)` covering the box, rounded outward.
    pub fn pixel_bounds(&self) -> (i64, i64, i64, i64) {
        (
            self.x1.floor() as i64,
            self.y1.floor() as i64,
            self.x2.ceil() as i64,
            self.y2.ceil() as i64,
        )
    }
}
