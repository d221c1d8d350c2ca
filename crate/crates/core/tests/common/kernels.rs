//! Naive per-pixel reference kernels. Every output pixel is computed from
//! scratch straight from the definitions, without tables or separability.

use plateguard::preprocess::PreprocessConfig;
use plateguard::raster::GrayImage;

/// Symmetric reflection that repeats the edge sample.
pub fn mirror(i: i64, n: i64) -> i64 {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i;
        }
    }
}

fn at(img: &GrayImage, x: i64, y: i64) -> u8 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    img.get(mirror(x, w) as u32, mirror(y, h) as u32)
}

pub fn bilateral(img: &GrayImage, r: i64, sigma_space: f64, sigma_color: f64) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        let c = at(img, x, y) as i64;
        let mut num = 0.0;
        let mut den = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let v = at(img, x + dx, y + dy) as i64;
                let ws = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_space * sigma_space)).exp();
                let wc = (-(((v - c) * (v - c)) as f64) / (2.0 * sigma_color * sigma_color)).exp();
                num += ws * wc * v as f64;
                den += ws * wc;
            }
        }
        (num / den).round().clamp(0.0, 255.0) as u8
    })
}

/// Clipped-CDF mapping of one tile, built from its pixels.
fn tile_map(img: &GrayImage, x0: u32, x1: u32, y0: u32, y1: u32, clip: f64) -> Vec<u8> {
    let mut hist = vec![0u64; 256];
    for y in y0..y1 {
        for x in x0..x1 {
            hist[img.get(x, y) as usize] += 1;
        }
    }
    let area = ((x1 - x0) * (y1 - y0)) as u64;
    let limit = ((clip * area as f64 / 256.0).round() as u64).max(1);
    let mut excess = 0;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    // whole rounds over every bin, then single units at an even stride
    for h in hist.iter_mut() {
        *h += excess / 256;
    }
    let rest = excess % 256;
    if rest > 0 {
        let stride = std::cmp::max(1, 256 / rest) as usize;
        for k in 0..rest as usize {
            let bin = k * stride;
            if bin >= 256 {
                break;
            }
            hist[bin] += 1;
        }
    }
    let mut cdf = 0;
    hist.iter()
        .map(|h| {
            cdf += h;
            (255.0 * cdf as f64 / area as f64).round().min(255.0) as u8
        })
        .collect()
}

/// Tile span `[lo, hi)` of tile `i` out of `n` over `len` pixels.
fn span(i: u32, n: u32, len: u32) -> (u32, u32) {
    let edge = |k: u32| (k as u64 * len as u64 / n as u64) as u32;
    (edge(i), edge(i + 1))
}

/// Lower tile, upper tile and weight of the upper one for coordinate `p`.
fn neighbors(p: u32, n: u32, len: u32) -> (u32, u32, f64) {
    let center = |i: u32| {
        let (lo, hi) = span(i, n, len);
        (lo as f64 + hi as f64 - 1.0) / 2.0
    };
    let p = p as f64;
    if p <= center(0) {
        return (0, 0, 0.0);
    }
    if p >= center(n - 1) {
        return (n - 1, n - 1, 0.0);
    }
    let mut i = 0;
    while center(i + 1) <= p {
        i += 1;
    }
    (i, i + 1, (p - center(i)) / (center(i + 1) - center(i)))
}

pub fn clahe(img: &GrayImage, tiles: (u32, u32), clip: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let (tx, ty) = tiles;
    GrayImage::from_fn(w, h, |x, y| {
        let v = img.get(x, y) as usize;
        let (i0, i1, wx) = neighbors(x, tx, w);
        let (j0, j1, wy) = neighbors(y, ty, h);
        let map = |i: u32, j: u32| {
            let (x0, x1) = span(i, tx, w);
            let (y0, y1) = span(j, ty, h);
            tile_map(img, x0, x1, y0, y1, clip)[v] as f64
        };
        let top = map(i0, j0) * (1.0 - wx) + map(i1, j0) * wx;
        let bottom = map(i0, j1) * (1.0 - wx) + map(i1, j1) * wx;
        (top * (1.0 - wy) + bottom * wy).round().clamp(0.0, 255.0) as u8
    })
}

pub fn adaptive_threshold(img: &GrayImage, block: u32, c: f64) -> GrayImage {
    let r = (block / 2) as i64;
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut sum = 0u64;
        for dy in -r..=r {
            for dx in -r..=r {
                sum += at(img, x as i64 + dx, y as i64 + dy) as u64;
            }
        }
        let mean = sum as f64 / (block * block) as f64;
        if img.get(x, y) as f64 > mean - c {
            255
        } else {
            0
        }
    })
}

fn window_extreme(img: &GrayImage, kernel: u32, max: bool) -> GrayImage {
    let r = (kernel / 2) as i64;
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let mut vals = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                vals.push(at(img, x as i64 + dx, y as i64 + dy));
            }
        }
        if max {
            *vals.iter().max().unwrap()
        } else {
            *vals.iter().min().unwrap()
        }
    })
}

pub fn opening(img: &GrayImage, kernel: u32) -> GrayImage {
    window_extreme(&window_extreme(img, kernel, false), kernel, true)
}

pub fn closing(img: &GrayImage, kernel: u32) -> GrayImage {
    window_extreme(&window_extreme(img, kernel, true), kernel, false)
}

/// The kernels of `cfg` applied through the reference implementations.
pub fn bilateral_cfg(img: &GrayImage, cfg: &PreprocessConfig) -> GrayImage {
    bilateral(img, cfg.bilateral_radius as i64, cfg.sigma_space, cfg.sigma_color)
}
