//! Independent reference implementations and fixture builders shared by the
//! integration suites and the acceptance runner.
#![allow(dead_code)]

pub mod ap;
pub mod engine;
pub mod kernels;
pub mod props;
pub mod scenes;

use plateguard::raster::GrayImage;
use plateguard::synth::SplitMix64;

/// Random gray image of the given size. `style` picks white noise, flat
/// blocks, or a gradient with light noise.
pub fn random_gray(rng: &mut SplitMix64, w: u32, h: u32, style: u64) -> GrayImage {
    match style % 3 {
        0 => GrayImage::from_fn(w, h, |_, _| rng.below(256) as u8),
        1 => {
            let levels: Vec<u8> = (0..16).map(|_| rng.below(256) as u8).collect();
            let block = 1 + rng.below(6) as u32;
            GrayImage::from_fn(w, h, |x, y| levels[((x / block + 3 * (y / block)) % 16) as usize])
        }
        _ => {
            let (a, b) = (rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0));
            let base = rng.uniform(0.0, 255.0);
            GrayImage::from_fn(w, h, |x, y| {
                let v = base + a * x as f64 + b * y as f64 + rng.uniform(-8.0, 8.0);
                v.round().clamp(0.0, 255.0) as u8
            })
        }
    }
}

pub fn random_binary(rng: &mut SplitMix64, w: u32, h: u32, density: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| if rng.chance(density) { 255 } else { 0 })
}
