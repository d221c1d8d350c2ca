//! Deterministic generators: plate images with known text, degradations,
//! and labeled detection scenes with ground-truth violations.
//!
//! All randomness comes from [`SplitMix64`] (Steele, Lea and Flood, 2014):
//! `state += 0x9E3779B97F4A7C15`, then the 64-bit finalizer
//! `z = (z ^ z>>30) * 0xBF58476D1CE4E5B9; z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31`.
//! Gaussian samples use the cosine branch of Box-Muller.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{write_detections, ClassLabel, Detection, FrameDetections};
use crate::engine::{EngineConfig, ViolationFlag, ViolationKind};
use crate::geometry::BBox;
use crate::ocr::{parse_plate_format, GlyphAtlas};
use crate::raster::{reflect, RasterError, RgbImage};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("character {0:?} is not in the atlas")]
    UnknownGlyph(char),
    #[error("{n_bikes} bikes do not fit a {width}x{height} frame")]
    Unplaceable { n_bikes: usize, width: u32, height: u32 },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal sample.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

const LETTERS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const DIGITS: &[u8] = b"0123456789";

/// A random text in the plate grammar.
pub fn random_plate_text(rng: &mut SplitMix64) -> String {
    let mut s = String::new();
    let mut pick = |set: &[u8], n: u64, rng: &mut SplitMix64| {
        for _ in 0..n {
            s.push(set[rng.below(set.len() as u64) as usize] as char);
        }
    };
    pick(LETTERS, 2, rng);
    pick(DIGITS, 2, rng);
    let series = 1 + rng.below(3);
    pick(LETTERS, series, rng);
    let number = 1 + rng.below(4);
    pick(DIGITS, number, rng);
    s
}

const PLATE_MARGIN: u32 = 4;
const GLYPH_GAP: u32 = 2;

/// Pixel size of the image [`render_plate`] produces for `n_chars` characters.
pub fn plate_size(n_chars: usize, atlas: &GlyphAtlas) -> (u32, u32) {
    let n = n_chars as u32;
    let w = 2 * PLATE_MARGIN + n * atlas.glyph_width() + n.saturating_sub(1) * GLYPH_GAP;
    (w, 2 * PLATE_MARGIN + atlas.glyph_height())
}

/// Black glyphs on white, 4 px margins and 2 px gaps.
pub fn render_plate(text: &str, atlas: &GlyphAtlas) -> Result<RgbImage, SynthError> {
    let glyphs = text
        .chars()
        .map(|c| atlas.glyph(c).ok_or(SynthError::UnknownGlyph(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let (w, h) = plate_size(glyphs.len(), atlas);
    let mut img = RgbImage::filled(w, h, [255, 255, 255]);
    for (i, g) in glyphs.iter().enumerate() {
        let x0 = PLATE_MARGIN + i as u32 * (atlas.glyph_width() + GLYPH_GAP);
        for y in 0..g.height() {
            for x in 0..g.width() {
                if g.get(x, y) == 0 {
                    img.set(x0 + x, PLATE_MARGIN + y, [0, 0, 0]);
                }
            }
        }
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    /// Gaussian noise standard deviation, per channel.
    pub noise_sigma: f64,
    /// Contrast compression toward 128, in `(0, 1]`.
    pub contrast_gain: f64,
    /// Additive intensity added at the right edge, ramping from 0 at the left.
    pub illum_slope: f64,
    /// 3x3 box blur passes.
    pub blur_passes: u32,
    pub seed: u64,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl DegradeSpec {
    pub fn identity() -> Self {
        Self {
            noise_sigma: 0.0,
            contrast_gain: 1.0,
            illum_slope: 0.0,
            blur_passes: 0,
            seed: 0,
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn box_blur(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.as_raw();
    let mut out = img.clone();
    let dst = out.as_raw_mut();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut sum = 0u32;
                for dy in -1i64..=1 {
                    let sy = reflect(y as i64 + dy, h);
                    for dx in -1i64..=1 {
                        let sx = reflect(x as i64 + dx, w);
                        sum += src[(sy * w + sx) * 3 + c] as u32;
                    }
                }
                dst[(y * w + x) * 3 + c] = ((sum + 4) / 9) as u8;
            }
        }
    }
    out
}

/// Contrast compression, illumination ramp, blur, then noise.
pub fn degrade(img: &RgbImage, spec: &DegradeSpec) -> RgbImage {
    let mut out = img.clone();
    let w = img.width() as usize;
    if spec.contrast_gain != 1.0 || spec.illum_slope != 0.0 {
        let denom = (w.max(2) - 1) as f64;
        for (i, v) in out.as_raw_mut().iter_mut().enumerate() {
            let x = (i / 3) % w;
            let c = clamp_u8(128.0 + spec.contrast_gain * (*v as f64 - 128.0));
            *v = clamp_u8(c as f64 + spec.illum_slope * x as f64 / denom);
        }
    }
    for _ in 0..spec.blur_passes {
        out = box_blur(&out);
    }
    if spec.noise_sigma > 0.0 {
        let mut rng = SplitMix64::new(spec.seed);
        for v in out.as_raw_mut() {
            *v = clamp_u8(*v as f64 + spec.noise_sigma * rng.gaussian());
        }
    }
    out
}

/// A plate image with its ground-truth text.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPlate {
    pub text: String,
    pub image: RgbImage,
}

/// Degradation ranges of the standard corpus.
fn random_degrade(rng: &mut SplitMix64) -> DegradeSpec {
    DegradeSpec {
        noise_sigma: rng.uniform(20.0, 45.0),
        contrast_gain: rng.uniform(0.45, 0.9),
        illum_slope: rng.uniform(-140.0, 140.0),
        blur_passes: rng.below(2) as u32,
        seed: rng.next_u64(),
    }
}

/// `n` random plates degraded with the standard ranges; fully determined by `seed`.
pub fn degraded_corpus(seed: u64, n: usize, atlas: &GlyphAtlas) -> Vec<LabeledPlate> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let text = random_plate_text(&mut rng);
            let spec = random_degrade(&mut rng);
            let clean = render_plate(&text, atlas).expect("grammar texts use atlas glyphs");
            LabeledPlate {
                image: degrade(&clean, &spec),
                text,
            }
        })
        .collect()
}

/// Writes `plates/NNN.png` and `plates/NNN.txt` under `dir`.
pub fn write_plate_corpus(dir: &Path, samples: &[LabeledPlate]) -> Result<(), SynthError> {
    let plates = dir.join("plates");
    fs::create_dir_all(&plates)?;
    for (i, s) in samples.iter().enumerate() {
        s.image.save_png(plates.join(format!("{i:03}.png")))?;
        fs::write(plates.join(format!("{i:03}.txt")), format!("{}\n", s.text))?;
    }
    Ok(())
}

/// Reads every `plates/*.png` with its `.txt` sibling, in file name order.
pub fn read_plate_corpus(dir: &Path) -> Result<Vec<LabeledPlate>, SynthError> {
    let plates = dir.join("plates");
    let mut pngs: Vec<_> = fs::read_dir(&plates)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    pngs.retain(|p| p.extension().is_some_and(|e| e == "png"));
    pngs.sort();
    pngs.into_iter()
        .map(|png| {
            let text = fs::read_to_string(png.with_extension("txt"))?;
            Ok(LabeledPlate {
                text: text.trim().to_string(),
                image: RgbImage::load(&png)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikeSpec {
    pub has_helmet: bool,
    pub has_no_helmet_rider: bool,
    pub n_mirrors: u32,
    pub has_plate: bool,
    /// Rendered onto the plate when present; the plate box then has the
    /// rendered plate's pixel size.
    pub plate_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frame_id: u64,
    pub width: u32,
    pub height: u32,
    pub bikes: Vec<BikeSpec>,
    pub min_mirrors: u32,
    pub seed: u64,
}

/// A plate placed in a scene, with the bike it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacedPlate {
    pub bike: BBox,
    pub plate: BBox,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub detections: FrameDetections,
    /// Expected flags, in bike order of `detections`, helmet before mirror.
    pub truth: Vec<ViolationFlag>,
    pub plates: Vec<PlacedPlate>,
}

const MIN_BIKE_WIDTH: f64 = 16.0;
const CELL_PAD: f64 = 2.0;

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn conf(rng: &mut SplitMix64) -> f64 {
    (rng.uniform(0.65, 0.99) * 1000.0).round() / 1000.0
}

fn bbox(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(round2(x1), round2(y1), round2(x2), round2(y2)).expect("layout boxes are ordered")
}

/// Columns and rows of the most square cells that hold `n` bikes.
fn grid(n: usize, width: u32, height: u32) -> (usize, usize) {
    let mut best = (n, 1);
    let mut best_side = 0.0;
    for cols in 1..=n {
        let rows = n.div_ceil(cols);
        let side = (width as f64 / cols as f64).min(height as f64 / rows as f64);
        if side > best_side {
            best_side = side;
            best = (cols, rows);
        }
    }
    best
}

/// Places one bike and its accessories inside the cell `[cx, cx+cw) x [cy, cy+ch)`.
///
/// The layout keeps the head region, mirror region and plate search radius
/// inside the cell, so association never crosses cells.
fn place_bike(
    rng: &mut SplitMix64,
    spec: &BikeSpec,
    cell: (f64, f64, f64, f64),
    plate_px: Option<(u32, u32)>,
    cfg: &EngineConfig,
) -> Option<(Vec<(ClassLabel, BBox)>, Option<BBox>)> {
    let (cx, cy, cw, ch) = cell;
    let (cw, ch) = (cw - 2.0 * CELL_PAD, ch - 2.0 * CELL_PAD);
    let aspect = rng.uniform(0.85, 1.15);
    let half_diag = cfg.plate_distance_factor * (1.0 + aspect * aspect).sqrt();
    // extents as multiples of the bike width, measured from the bike center
    let side = (0.5 + cfg.mirror_region_horizontal).max(half_diag);
    let up = (aspect * (0.5 + cfg.head_region_up)).max(half_diag);
    let plate_top = aspect * 0.25;
    let (mut max_bw, pw, ph) = match plate_px {
        Some((pw, ph)) => {
            let (pw, ph) = (pw as f64, ph as f64);
            if pw > cw {
                return None;
            }
            let by_height = (ch - ph) / (up + plate_top);
            (by_height.min(ch / (up + half_diag)), Some(pw), Some(ph))
        }
        None => (ch / (up + half_diag.max(plate_top + 0.2)), None, None),
    };
    max_bw = max_bw.min(cw / (2.0 * side));
    let bw = rng.uniform(0.7, 0.9) * max_bw;
    if bw < MIN_BIKE_WIDTH {
        return None;
    }
    let bh = aspect * bw;
    let (pw, ph) = (pw.unwrap_or(0.6 * bw), ph.unwrap_or(0.2 * bw));
    let half_w = (side * bw).max(pw / 2.0);
    let above = up * bw;
    let below = (half_diag * bw).max(plate_top * bw + ph);
    let mx = cx + CELL_PAD + half_w + rng.next_f64() * (cw - 2.0 * half_w).max(0.0);
    let my = cy + CELL_PAD + above + rng.next_f64() * (ch - above - below).max(0.0);

    let (x1, y1, x2, y2) = (mx - bw / 2.0, my - bh / 2.0, mx + bw / 2.0, my + bh / 2.0);
    let mut out = vec![(ClassLabel::Bike, bbox(x1, y1, x2, y2))];

    let head = |rng: &mut SplitMix64| {
        let (hw, hh) = (bw * rng.uniform(0.2, 0.3), bh * rng.uniform(0.2, 0.3));
        let hx = mx + bw * rng.uniform(-0.2, 0.2);
        let hy = y1 + bh * rng.uniform(-0.4, 0.2);
        bbox(hx - hw / 2.0, hy - hh / 2.0, hx + hw / 2.0, hy + hh / 2.0)
    };
    if spec.has_helmet {
        out.push((ClassLabel::Helmet, head(rng)));
    }
    if spec.has_no_helmet_rider {
        out.push((ClassLabel::NoHelmet, head(rng)));
    }
    for i in 0..spec.n_mirrors {
        let edge = if i % 2 == 0 { x1 } else { x2 };
        let (mw, mh) = (0.1 * bw, 0.08 * bh);
        let mxc = edge + bw * rng.uniform(-0.1, 0.1);
        let myc = y1 + bh * rng.uniform(0.1, 0.5);
        out.push((
            ClassLabel::Mirror,
            bbox(mxc - mw / 2.0, myc - mh / 2.0, mxc + mw / 2.0, myc + mh / 2.0),
        ));
    }
    let plate = spec.has_plate.then(|| {
        let top = y2 - plate_top * bw;
        if plate_px.is_some() {
            // integer position so the rendered plate maps onto whole pixels
            let left = (mx - pw / 2.0).round();
            let top = top.round();
            bbox(left, top, left + pw, top + ph)
        } else {
            bbox(mx - pw / 2.0, top, mx + pw / 2.0, top + ph)
        }
    });
    if let Some(p) = plate {
        out.push((ClassLabel::NumberPlate, p));
    }
    Some((out, plate))
}

/// Lays out the scene on a seeded grid and derives the expected flags.
pub fn gen_scene(spec: &SceneSpec, cfg: &EngineConfig, atlas: &GlyphAtlas) -> Result<Scene, SynthError> {
    for b in &spec.bikes {
        if let Some(t) = &b.plate_text {
            if !b.has_plate {
                return Err(SynthError::InvalidSpec("plate_text without a plate".into()));
            }
            parse_plate_format(t).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        }
    }
    let mut frame = FrameDetections::new(spec.frame_id, spec.width, spec.height);
    if spec.bikes.is_empty() {
        return Ok(Scene {
            detections: frame,
            truth: Vec::new(),
            plates: Vec::new(),
        });
    }
    let unplaceable = || SynthError::Unplaceable {
        n_bikes: spec.bikes.len(),
        width: spec.width,
        height: spec.height,
    };
    let mut rng = SplitMix64::new(spec.seed);
    let (cols, rows) = grid(spec.bikes.len(), spec.width, spec.height);
    let (cw, ch) = (spec.width as f64 / cols as f64, spec.height as f64 / rows as f64);
    let mut cells: Vec<usize> = (0..cols * rows).collect();
    rng.shuffle(&mut cells);

    // (detection, owning bike)
    let mut placed: Vec<(Detection, usize)> = Vec::new();
    let mut plates = Vec::new();
    for (i, b) in spec.bikes.iter().enumerate() {
        let cell = cells[i];
        let origin = ((cell % cols) as f64 * cw, (cell / cols) as f64 * ch);
        let plate_px = b.plate_text.as_ref().map(|t| plate_size(t.chars().count(), atlas));
        let (boxes, plate) =
            place_bike(&mut rng, b, (origin.0, origin.1, cw, ch), plate_px, cfg).ok_or_else(unplaceable)?;
        if let Some(p) = plate {
            plates.push(PlacedPlate {
                bike: boxes[0].1,
                plate: p,
                text: b.plate_text.clone(),
            });
        }
        for (class, bb) in boxes {
            placed.push((Detection::new(spec.frame_id, class, bb, conf(&mut rng)), i));
        }
    }
    rng.shuffle(&mut placed);

    let mut truth = Vec::new();
    for (bike, owner) in placed.iter().filter(|(d, _)| d.class == ClassLabel::Bike) {
        let b = &spec.bikes[*owner];
        let owned = |class: ClassLabel| -> Vec<Detection> {
            placed
                .iter()
                .filter(|(d, o)| o == owner && d.class == class)
                .map(|(d, _)| d.clone())
                .collect()
        };
        if !b.has_helmet || b.has_no_helmet_rider {
            truth.push(ViolationFlag {
                kind: ViolationKind::NoHelmet,
                bike_bbox: bike.bbox,
                evidence: owned(ClassLabel::NoHelmet),
            });
        }
        if b.n_mirrors < spec.min_mirrors {
            truth.push(ViolationFlag {
                kind: ViolationKind::MissingMirror,
                bike_bbox: bike.bbox,
                evidence: owned(ClassLabel::Mirror),
            });
        }
    }
    frame.detections = placed.into_iter().map(|(d, _)| d).collect();
    Ok(Scene {
        detections: frame,
        truth,
        plates,
    })
}

/// A random scene spec with up to `max_bikes` bikes. With `readable_plates`
/// every plate carries a random grammatical text.
pub fn random_scene_spec(
    rng: &mut SplitMix64,
    frame_id: u64,
    (width, height): (u32, u32),
    max_bikes: usize,
    readable_plates: bool,
) -> SceneSpec {
    let n = rng.below(max_bikes as u64 + 1) as usize;
    let bikes = (0..n)
        .map(|_| {
            let has_plate = rng.chance(0.8);
            BikeSpec {
                has_helmet: rng.chance(0.6),
                has_no_helmet_rider: rng.chance(0.25),
                n_mirrors: rng.below(3) as u32,
                has_plate,
                plate_text: (has_plate && readable_plates).then(|| random_plate_text(rng)),
            }
        })
        .collect();
    SceneSpec {
        frame_id,
        width,
        height,
        bikes,
        min_mirrors: 1,
        seed: rng.next_u64(),
    }
}

const BACKGROUND: [u8; 3] = [96, 104, 96];

fn class_fill(class: ClassLabel) -> [u8; 3] {
    match class {
        ClassLabel::Bike => [60, 70, 150],
        ClassLabel::Helmet => [200, 180, 40],
        ClassLabel::NoHelmet => [170, 120, 90],
        ClassLabel::Mirror => [150, 150, 160],
        ClassLabel::NumberPlate => [255, 255, 255],
    }
}

/// Paints the scene: flat boxes for every detection and the rendered text
/// on plates that have one.
pub fn render_frame(scene: &Scene, atlas: &GlyphAtlas) -> Result<RgbImage, SynthError> {
    let d = &scene.detections;
    let mut img = RgbImage::filled(d.width, d.height, BACKGROUND);
    let order = [
        ClassLabel::Bike,
        ClassLabel::Helmet,
        ClassLabel::NoHelmet,
        ClassLabel::Mirror,
        ClassLabel::NumberPlate,
    ];
    for class in order {
        for det in d.of_class(class) {
            let (x0, y0, x1, y1) = det.bbox.pixel_bounds();
            img.fill_rect(x0, y0, x1, y1, class_fill(class));
        }
    }
    for p in &scene.plates {
        if let Some(text) = &p.text {
            let plate = render_plate(text, atlas)?;
            img.blit(&plate, p.plate.x1() as i64, p.plate.y1() as i64);
        }
    }
    Ok(img)
}

/// Ground truth of one frame as written to `scenes_truth.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_id: u64,
    pub flags: Vec<TruthFlag>,
    pub plates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFlag {
    pub kind: ViolationKind,
    pub bike: BBox,
}

/// Generates `n` scenes and writes `scenes.jsonl`, `scenes_truth.jsonl` and
/// one PNG per frame under `frames/`.
pub fn write_scene_corpus(
    dir: &Path,
    n: usize,
    seed: u64,
    frame_size: (u32, u32),
    max_bikes: usize,
    atlas: &GlyphAtlas,
) -> Result<Vec<Scene>, SynthError> {
    let cfg = EngineConfig::default();
    let mut rng = SplitMix64::new(seed);
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir)?;
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        // retry with fresh draws when a spec does not fit the frame
        let scene = loop {
            let spec = random_scene_spec(&mut rng, i as u64, frame_size, max_bikes, true);
            match gen_scene(&spec, &cfg, atlas) {
                Ok(s) => break s,
                Err(SynthError::Unplaceable { .. }) => continue,
                Err(e) => return Err(e),
            }
        };
        render_frame(&scene, atlas)?.save_png(frames_dir.join(format!("{i:06}.png")))?;
        scenes.push(scene);
    }
    let mut out = BufWriter::new(fs::File::create(dir.join("scenes.jsonl"))?);
    write_detections(&mut out, frame_size.0, frame_size.1, scenes.iter().map(|s| &s.detections))?;
    out.flush()?;
    let mut truth = BufWriter::new(fs::File::create(dir.join("scenes_truth.jsonl"))?);
    for s in &scenes {
        let t = FrameTruth {
            frame_id: s.detections.frame_id,
            flags: s
                .truth
                .iter()
                .map(|f| TruthFlag {
                    kind: f.kind,
                    bike: f.bike_bbox,
                })
                .collect(),
            plates: s.plates.iter().filter_map(|p| p.text.clone()).collect(),
        };
        writeln!(truth, "{}", serde_json::to_string(&t).expect("truth serializes"))?;
    }
    truth.flush()?;
    Ok(scenes)
}
