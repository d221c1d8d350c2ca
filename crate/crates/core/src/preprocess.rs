//! Plate-crop preprocessing: grayscale, bilateral smoothing, CLAHE and an
//! optional adaptive-threshold + morphology stage.
//!
//! Every kernel is deterministic. Rounding is half away from zero
//! (`f64::round`) and borders use symmetric reflection (`cba|abc|cba`).

use serde::Serialize;
use thiserror::Error;

use crate::raster::{reflect, GrayImage, RgbImage};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("image {width}x{height} is too small for {tiles_x}x{tiles_y} CLAHE tiles")]
    ImageTooSmall {
        width: u32,
        height: u32,
        tiles_x: u32,
        tiles_y: u32,
    },
    #[error("invalid preprocess config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Opening,
    Closing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessConfig {
    pub bilateral_radius: u32,
    pub sigma_space: f64,
    pub sigma_color: f64,
    /// Relative clip factor: bins are capped at `clip * tile_area / 256`.
    pub clahe_clip: f64,
    pub clahe_tiles: (u32, u32),
    /// Binarization runs only when the post-CLAHE standard deviation is below this.
    pub binarize_contrast_threshold: f64,
    pub adaptive_block: u32,
    pub adaptive_c: f64,
    pub morph_kernel: u32,
    pub morph_op: MorphOp,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bilateral_radius: 4,
            sigma_space: 75.0,
            sigma_color: 75.0,
            clahe_clip: 2.0,
            clahe_tiles: (8, 8),
            binarize_contrast_threshold: 40.0,
            adaptive_block: 11,
            adaptive_c: 2.0,
            morph_kernel: 3,
            morph_op: MorphOp::Opening,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let err = |m: String| Err(PreprocessError::InvalidConfig(m));
        if self.bilateral_radius < 1 {
            return err("bilateral_radius must be >= 1".into());
        }
        if !(self.sigma_space > 0.0 && self.sigma_color > 0.0) {
            return err("bilateral sigmas must be > 0".into());
        }
        if !(self.clahe_clip > 0.0) {
            return err("clahe_clip must be > 0".into());
        }
        if self.clahe_tiles.0 < 1 || self.clahe_tiles.1 < 1 {
            return err("clahe_tiles must be at least 1x1".into());
        }
        if self.adaptive_block < 3 || self.adaptive_block.is_multiple_of(2) {
            return err(format!("adaptive_block must be odd and >= 3, got {}", self.adaptive_block));
        }
        if self.morph_kernel < 1 || self.morph_kernel.is_multiple_of(2) {
            return err(format!("morph_kernel must be odd, got {}", self.morph_kernel));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Grayscale,
    Bilateral,
    Clahe,
    Binarize,
}

impl Stage {
    pub const CANONICAL: [Stage; 4] = [Stage::Grayscale, Stage::Bilateral, Stage::Clahe, Stage::Binarize];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Grayscale => "grayscale",
            Stage::Bilateral => "bilateral",
            Stage::Clahe => "clahe",
            Stage::Binarize => "binarize",
        }
    }
}

/// ITU-R BT.601 luma, rounded.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .as_raw()
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

/// Edge-preserving smoothing over a `(2r+1)^2` window with Gaussian spatial
/// and intensity weights.
pub fn bilateral_filter(img: &GrayImage, cfg: &PreprocessConfig) -> GrayImage {
    if img.is_empty() {
        return img.clone();
    }
    let r = cfg.bilateral_radius as i64;
    let side = (2 * r + 1) as usize;
    let ss = cfg.sigma_space;
    let sc = cfg.sigma_color;

    // Weight tables are evaluated with exactly the expressions a direct
    // per-tap evaluation would use, so results do not depend on the tables.
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / (2.0 * ss * ss)).exp());
        }
    }
    let color: Vec<f64> = (0..256i64)
        .map(|d| (-((d * d) as f64) / (2.0 * sc * sc)).exp())
        .collect();

    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.as_raw();
    let xs: Vec<Vec<usize>> = (0..w as i64)
        .map(|x| (-r..=r).map(|dx| reflect(x + dx, w)).collect())
        .collect();
    let ys: Vec<Vec<usize>> = (0..h as i64)
        .map(|y| (-r..=r).map(|dy| reflect(y + dy, h)).collect())
        .collect();

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let center = src[y * w + x] as i32;
            let (mut num, mut den) = (0.0f64, 0.0f64);
            let mut k = 0;
            for &qy in &ys[y] {
                let row = &src[qy * w..(qy + 1) * w];
                for &qx in &xs[x] {
                    let v = row[qx];
                    let wgt = spatial[k] * color[(v as i32 - center).unsigned_abs() as usize];
                    num += wgt * v as f64;
                    den += wgt;
                    k += 1;
                }
            }
            out.push((num / den).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::from_raw(img.width(), img.height(), out).expect("same dimensions")
}

/// Start offsets of `tiles` near-equal spans over `n` pixels, plus `n`.
pub fn tile_edges(n: u32, tiles: u32) -> Vec<u32> {
    (0..=tiles).map(|i| (i as u64 * n as u64 / tiles as u64) as u32).collect()
}

/// Equalization table for one tile histogram after clipping and uniform
/// redistribution of the excess.
pub fn clipped_equalization_lut(hist: &[u32; 256], clip: f64) -> [u8; 256] {
    let area: u64 = hist.iter().map(|&c| c as u64).sum();
    let mut lut = [0u8; 256];
    if area == 0 {
        return lut;
    }
    let clip_count = ((clip * area as f64 / 256.0).round() as u64).max(1);
    let mut h = [0u64; 256];
    let mut excess = 0u64;
    for (dst, &c) in h.iter_mut().zip(hist) {
        let c = c as u64;
        if c > clip_count {
            excess += c - clip_count;
            *dst = clip_count;
        } else {
            *dst = c;
        }
    }
    let batch = excess / 256;
    let mut residual = excess % 256;
    for v in h.iter_mut() {
        *v += batch;
    }
    if residual > 0 {
        let step = (256 / residual).max(1) as usize;
        let mut i = 0;
        while i < 256 && residual > 0 {
            h[i] += 1;
            residual -= 1;
            i += step;
        }
    }
    let mut cdf = 0u64;
    for (v, out) in lut.iter_mut().enumerate() {
        cdf += h[v];
        // round(255 * cdf / area), half away from zero, in integers
        *out = ((2 * 255 * cdf + area) / (2 * area)).min(255) as u8;
    }
    lut
}

/// Per-tile lookup tables in row-major tile order.
pub fn clahe_tile_luts(img: &GrayImage, cfg: &PreprocessConfig) -> Result<Vec<[u8; 256]>, PreprocessError> {
    let (tx, ty) = cfg.clahe_tiles;
    if tx == 0 || ty == 0 || img.width() < tx || img.height() < ty {
        return Err(PreprocessError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            tiles_x: tx,
            tiles_y: ty,
        });
    }
    let xe = tile_edges(img.width(), tx);
    let ye = tile_edges(img.height(), ty);
    let mut luts = Vec::with_capacity((tx * ty) as usize);
    for j in 0..ty as usize {
        for i in 0..tx as usize {
            let mut hist = [0u32; 256];
            for y in ye[j]..ye[j + 1] {
                for &v in &img.row(y)[xe[i] as usize..xe[i + 1] as usize] {
                    hist[v as usize] += 1;
                }
            }
            luts.push(clipped_equalization_lut(&hist, cfg.clahe_clip));
        }
    }
    Ok(luts)
}

/// Tile centers in pixel coordinates.
pub fn tile_centers(edges: &[u32]) -> Vec<f64> {
    edges.windows(2).map(|e| (e[0] as f64 + e[1] as f64 - 1.0) / 2.0).collect()
}

/// Neighboring tiles and interpolation weight of the second one for a coordinate.
fn interp_coord(pos: f64, centers: &[f64]) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= pos) - 1;
    (i, i + 1, (pos - centers[i]) / (centers[i + 1] - centers[i]))
}

/// Contrast limited adaptive histogram equalization with bilinear
/// interpolation between the four surrounding tile mappings.
pub fn clahe(img: &GrayImage, cfg: &PreprocessConfig) -> Result<GrayImage, PreprocessError> {
    let luts = clahe_tile_luts(img, cfg)?;
    let (tx, ty) = cfg.clahe_tiles;
    let cx = tile_centers(&tile_edges(img.width(), tx));
    let cy = tile_centers(&tile_edges(img.height(), ty));
    let cols: Vec<(usize, usize, f64)> = (0..img.width()).map(|x| interp_coord(x as f64, &cx)).collect();
    let tx = tx as usize;

    let mut out = Vec::with_capacity(img.as_raw().len());
    for y in 0..img.height() {
        let (j0, j1, wy) = interp_coord(y as f64, &cy);
        for (x, &v) in img.row(y).iter().enumerate() {
            let (i0, i1, wx) = cols[x];
            let v = v as usize;
            let m = |j: usize, i: usize| luts[j * tx + i][v] as f64;
            let top = m(j0, i0) * (1.0 - wx) + m(j0, i1) * wx;
            let bottom = m(j1, i0) * (1.0 - wx) + m(j1, i1) * wx;
            out.push((top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(GrayImage::from_raw(img.width(), img.height(), out).expect("same dimensions"))
}

/// Window sums over a `(2r+1)^2` reflected neighborhood, exact in integers.
fn box_sums(img: &GrayImage, r: i64) -> Vec<u32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.as_raw();
    let mut horiz = vec![0u32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] = (-r..=r).map(|d| row[reflect(x as i64 + d, w)] as u32).sum();
        }
    }
    let mut sums = vec![0u32; w * h];
    for y in 0..h {
        for d in -r..=r {
            let sy = reflect(y as i64 + d, h);
            for x in 0..w {
                sums[y * w + x] += horiz[sy * w + x];
            }
        }
    }
    sums
}

/// 255 where the pixel exceeds its block mean minus `c`, else 0.
pub fn adaptive_threshold(img: &GrayImage, block: u32, c: f64) -> GrayImage {
    if img.is_empty() {
        return img.clone();
    }
    let r = (block / 2) as i64;
    let n = (block * block) as f64;
    let sums = box_sums(img, r);
    let data = img
        .as_raw()
        .iter()
        .zip(&sums)
        .map(|(&p, &s)| if p as f64 > s as f64 / n - c { 255 } else { 0 })
        .collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

fn rank_filter(img: &GrayImage, kernel: u32, take_max: bool) -> GrayImage {
    if img.is_empty() {
        return img.clone();
    }
    let r = (kernel / 2) as i64;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pick = |a: u8, b: u8| if take_max { a.max(b) } else { a.min(b) };
    let init = if take_max { 0u8 } else { 255u8 };
    let src = img.as_raw();
    let mut horiz = vec![0u8; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            horiz[y * w + x] = (-r..=r).fold(init, |acc, d| pick(acc, row[reflect(x as i64 + d, w)]));
        }
    }
    let mut out = vec![init; w * h];
    for y in 0..h {
        for d in -r..=r {
            let sy = reflect(y as i64 + d, h);
            for x in 0..w {
                out[y * w + x] = pick(out[y * w + x], horiz[sy * w + x]);
            }
        }
    }
    GrayImage::from_raw(img.width(), img.height(), out).expect("same dimensions")
}

/// Minimum over a square window (shrinks the 255 foreground).
pub fn erode(img: &GrayImage, kernel: u32) -> GrayImage {
    rank_filter(img, kernel, false)
}

/// Maximum over a square window (grows the 255 foreground).
pub fn dilate(img: &GrayImage, kernel: u32) -> GrayImage {
    rank_filter(img, kernel, true)
}

pub fn opening(img: &GrayImage, kernel: u32) -> GrayImage {
    dilate(&erode(img, kernel), kernel)
}

pub fn closing(img: &GrayImage, kernel: u32) -> GrayImage {
    erode(&dilate(img, kernel), kernel)
}

/// Adaptive threshold followed by the configured morphological cleanup.
pub fn binarize_and_clean(img: &GrayImage, cfg: &PreprocessConfig) -> GrayImage {
    let bin = adaptive_threshold(img, cfg.adaptive_block, cfg.adaptive_c);
    match cfg.morph_op {
        MorphOp::Opening => opening(&bin, cfg.morph_kernel),
        MorphOp::Closing => closing(&bin, cfg.morph_kernel),
    }
}

/// Full pipeline. Grayscale, bilateral and CLAHE always run; binarization
/// runs only for low-contrast results. Returns the stages actually applied.
pub fn preprocess_plate(img: &RgbImage, cfg: &PreprocessConfig) -> Result<(GrayImage, Vec<Stage>), PreprocessError> {
    cfg.validate()?;
    let gray = to_grayscale(img);
    let smooth = bilateral_filter(&gray, cfg);
    let eq = clahe(&smooth, cfg)?;
    let mut stages = vec![Stage::Grayscale, Stage::Bilateral, Stage::Clahe];
    let (_, std) = eq.mean_std();
    if std < cfg.binarize_contrast_threshold {
        stages.push(Stage::Binarize);
        return Ok((binarize_and_clean(&eq, cfg), stages));
    }
    Ok((eq, stages))
}
