//! Glyph atlas and the built-in template-matching recognizer.
//!
//! Recognition binarizes the crop (Otsu unless it is already binary),
//! splits character cells at vertical projection valleys, crops each cell to
//! its ink extent and compares it pixel by pixel against every glyph cropped
//! and scaled the same way.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{font, CharMatch, OcrError, Recognizer};
use crate::raster::GrayImage;

/// Character order of atlas strips.
pub const ALPHABET: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Column ink sums below this fraction of the maximum separate cells.
const VALLEY_FRACTION: f64 = 0.05;
/// Cells narrower than this are dropped as noise.
const MIN_CELL_WIDTH: usize = 2;

/// Row-major boolean bitmap; `true` is ink.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Copy of `[x0, x1) x [y0, y1)`.
    fn sub(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Mask {
        let mut bits = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            bits.extend_from_slice(&self.bits[y * self.width + x0..y * self.width + x1]);
        }
        Mask {
            width: x1 - x0,
            height: y1 - y0,
            bits,
        }
    }

    /// Crop to the bounding box of the ink, `None` when there is none.
    fn tight(&self) -> Option<Mask> {
        let cols: Vec<usize> = (0..self.width).filter(|&x| (0..self.height).any(|y| self.get(x, y))).collect();
        let rows: Vec<usize> = (0..self.height).filter(|&y| (0..self.width).any(|x| self.get(x, y))).collect();
        let (&x0, &x1) = (cols.first()?, cols.last()?);
        let (&y0, &y1) = (rows.first()?, rows.last()?);
        Some(self.sub(x0, y0, x1 + 1, y1 + 1))
    }

    /// Nearest-neighbor resampling to `width x height`.
    fn resize(&self, width: usize, height: usize) -> Mask {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((2 * y + 1) * self.height / (2 * height)).min(self.height - 1);
            for x in 0..width {
                let sx = ((2 * x + 1) * self.width / (2 * width)).min(self.width - 1);
                bits.push(self.get(sx, sy));
            }
        }
        Mask { width, height, bits }
    }
}

/// Otsu threshold: the level `t` maximizing between-class variance when
/// pixels `<= t` form the dark class.
pub fn otsu_level(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &v in img.as_raw() {
        hist[v as usize] += 1;
    }
    let total = img.as_raw().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let (mut best, mut best_var) = (0u8, -1.0f64);
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best = t as u8;
        }
    }
    best
}

fn ink_mask(img: &GrayImage) -> Mask {
    let bits = if img.is_binary() {
        img.as_raw().iter().map(|&v| v == 0).collect()
    } else {
        let t = otsu_level(img);
        img.as_raw().iter().map(|&v| v <= t).collect()
    };
    Mask {
        width: img.width() as usize,
        height: img.height() as usize,
        bits,
    }
}

/// Column spans `[x0, x1)` of character cells, left to right.
fn segment_columns(mask: &Mask) -> Vec<(usize, usize)> {
    let sums: Vec<usize> = (0..mask.width)
        .map(|x| (0..mask.height).filter(|&y| mask.get(x, y)).count())
        .collect();
    let max = sums.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Vec::new();
    }
    let floor = VALLEY_FRACTION * max as f64;
    let mut cells = Vec::new();
    let mut start = None;
    for (x, &s) in sums.iter().enumerate() {
        let inked = s > 0 && s as f64 >= floor;
        match (inked, start) {
            (true, None) => start = Some(x),
            (false, Some(x0)) => {
                cells.push((x0, x));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(x0) = start {
        cells.push((x0, mask.width));
    }
    cells.retain(|(a, b)| b - a >= MIN_CELL_WIDTH);
    cells
}

/// Fixed-size binary glyphs for `A-Z` and `0-9`.
#[derive(Debug, Clone)]
pub struct GlyphAtlas {
    glyph_width: u32,
    glyph_height: u32,
    chars: Vec<char>,
    glyphs: Vec<GrayImage>,
    templates: Vec<Mask>,
}

impl GlyphAtlas {
    /// Validates and indexes glyph bitmaps (0 = ink, 255 = paper) in `ALPHABET` order.
    pub fn new(glyph_width: u32, glyph_height: u32, glyphs: Vec<GrayImage>) -> Result<Self, OcrError> {
        let bad = |m: String| Err(OcrError::InvalidAtlas(m));
        if glyphs.len() != ALPHABET.len() {
            return bad(format!("expected {} glyphs, got {}", ALPHABET.len(), glyphs.len()));
        }
        let chars: Vec<char> = ALPHABET.chars().collect();
        let mut templates = Vec::with_capacity(glyphs.len());
        for (g, &c) in glyphs.iter().zip(&chars) {
            if (g.width(), g.height()) != (glyph_width, glyph_height) {
                return bad(format!("glyph {c:?} is {}x{}", g.width(), g.height()));
            }
            if !g.is_binary() {
                return bad(format!("glyph {c:?} is not binary"));
            }
            let Some(t) = ink_mask(g).tight() else {
                return bad(format!("glyph {c:?} is blank"));
            };
            templates.push(t.resize(glyph_width as usize, glyph_height as usize));
        }
        for i in 0..templates.len() {
            for j in i + 1..templates.len() {
                if templates[i] == templates[j] {
                    return bad(format!("glyphs {:?} and {:?} are indistinguishable", chars[i], chars[j]));
                }
            }
        }
        Ok(Self {
            glyph_width,
            glyph_height,
            chars,
            glyphs,
            templates,
        })
    }

    /// The embedded 5x7 font, scaled and padded horizontally.
    pub fn builtin() -> Self {
        let (s, pad) = (font::SCALE, font::PAD_X);
        let (w, h) = (5 * s + 2 * pad, 7 * s);
        let glyphs = font::GLYPHS
            .iter()
            .map(|(_, rows)| {
                GrayImage::from_fn(w, h, |x, y| {
                    let ink = (pad..pad + 5 * s).contains(&x)
                        && rows[(y / s) as usize].as_bytes()[((x - pad) / s) as usize] == b'#';
                    if ink {
                        0
                    } else {
                        255
                    }
                })
            })
            .collect();
        Self::new(w, h, glyphs).expect("built-in font is a valid atlas")
    }

    pub fn glyph_width(&self) -> u32 {
        self.glyph_width
    }

    pub fn glyph_height(&self) -> u32 {
        self.glyph_height
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains(&c)
    }

    pub fn glyph(&self, c: char) -> Option<&GrayImage> {
        self.chars.iter().position(|&x| x == c).map(|i| &self.glyphs[i])
    }

    /// All glyphs side by side in `ALPHABET` order.
    pub fn to_strip(&self) -> GrayImage {
        let gw = self.glyph_width;
        GrayImage::from_fn(gw * self.glyphs.len() as u32, self.glyph_height, |x, y| {
            self.glyphs[(x / gw) as usize].get(x % gw, y)
        })
    }

    pub fn from_strip(strip: &GrayImage, glyph_width: u32, glyph_height: u32) -> Result<Self, OcrError> {
        let n = ALPHABET.len() as u32;
        if strip.width() != glyph_width * n || strip.height() != glyph_height {
            return Err(OcrError::InvalidAtlas(format!(
                "strip is {}x{}, expected {}x{}",
                strip.width(),
                strip.height(),
                glyph_width * n,
                glyph_height
            )));
        }
        let glyphs = (0..n)
            .map(|i| GrayImage::from_fn(glyph_width, glyph_height, |x, y| strip.get(i * glyph_width + x, y)))
            .collect();
        Self::new(glyph_width, glyph_height, glyphs)
    }

    fn sidecar(path: &Path) -> PathBuf {
        path.with_extension("txt")
    }

    /// Writes `path` as a PGM strip and a `key = value` sidecar next to it
    /// (same stem, `.txt`) declaring the glyph dimensions.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), OcrError> {
        let path = path.as_ref();
        self.to_strip().save_pgm(path)?;
        let header = format!(
            "glyph_width = {}\nglyph_height = {}\nglyphs = {}\n",
            self.glyph_width, self.glyph_height, ALPHABET
        );
        fs::write(Self::sidecar(path), header)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OcrError> {
        let path = path.as_ref();
        let text = fs::read_to_string(Self::sidecar(path))?;
        let mut fields = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| OcrError::InvalidAtlas(format!("bad sidecar line {line:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let dim = |k: &str| -> Result<u32, OcrError> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| OcrError::InvalidAtlas(format!("sidecar is missing {k}")))
        };
        let (gw, gh) = (dim("glyph_width")?, dim("glyph_height")?);
        if let Some(order) = fields.get("glyphs") {
            if order != ALPHABET {
                return Err(OcrError::InvalidAtlas(format!("unsupported glyph order {order:?}")));
            }
        }
        let strip = GrayImage::load(path)?;
        Self::from_strip(&strip, gw, gh)
    }

    /// Best glyph for one cell mask; ties keep the earlier glyph.
    fn classify(&self, cell: &Mask) -> CharMatch {
        let norm = cell.resize(self.glyph_width as usize, self.glyph_height as usize);
        let total = norm.bits.len() as f64;
        let mut best = CharMatch { ch: self.chars[0], score: -1.0 };
        for (t, &c) in self.templates.iter().zip(&self.chars) {
            let same = t.bits.iter().zip(&norm.bits).filter(|(a, b)| a == b).count();
            let score = same as f64 / total;
            if score > best.score {
                best = CharMatch { ch: c, score };
            }
        }
        best
    }
}

impl Recognizer for GlyphAtlas {
    fn recognize(&self, img: &GrayImage) -> Result<Vec<CharMatch>, OcrError> {
        if img.is_empty() {
            return Err(OcrError::EmptyImage);
        }
        let mask = ink_mask(img);
        let mut out = Vec::new();
        for (x0, x1) in segment_columns(&mask) {
            let column = mask.sub(x0, 0, x1, mask.height);
            if let Some(cell) = column.tight() {
                out.push(self.classify(&cell));
            }
        }
        if out.is_empty() {
            return Err(OcrError::NoCharactersFound);
        }
        Ok(out)
    }
}
