//! Frame annotation: class-colored box outlines and a double red border
//! around bikes with violations.

use crate::detection::{ClassLabel, Detection};
use crate::engine::ViolationFlag;
use crate::raster::RgbImage;

pub const VIOLATION_COLOR: [u8; 3] = [255, 0, 0];

pub fn class_color(class: ClassLabel) -> [u8; 3] {
    match class {
        ClassLabel::Bike => [0, 128, 255],
        ClassLabel::Helmet => [0, 200, 0],
        ClassLabel::NoHelmet => [255, 140, 0],
        ClassLabel::Mirror => [200, 0, 200],
        ClassLabel::NumberPlate => [255, 255, 0],
    }
}

/// Outline of the half-open pixel rectangle `[x0, x1) x [y0, y1)`,
/// `thickness` pixels wide on the inside, clipped to the image.
pub fn draw_outline(img: &mut RgbImage, (x0, y0, x1, y1): (i64, i64, i64, i64), thickness: i64, color: [u8; 3]) {
    let t = thickness;
    img.fill_rect(x0, y0, x1, (y0 + t).min(y1), color);
    img.fill_rect(x0, (y1 - t).max(y0), x1, y1, color);
    img.fill_rect(x0, y0, (x0 + t).min(x1), y1, color);
    img.fill_rect((x1 - t).max(x0), y0, x1, y1, color);
}

/// Returns an annotated copy of `img`.
pub fn annotate_frame(img: &RgbImage, dets: &[Detection], flags: &[ViolationFlag]) -> RgbImage {
    let mut out = img.clone();
    for d in dets {
        draw_outline(&mut out, d.bbox.pixel_bounds(), 2, class_color(d.class));
    }
    for f in flags {
        let (x0, y0, x1, y1) = f.bike_bbox.pixel_bounds();
        for gap in [3, 5] {
            draw_outline(&mut out, (x0 - gap, y0 - gap, x1 + gap, y1 + gap), 1, VIOLATION_COLOR);
        }
    }
    out
}
