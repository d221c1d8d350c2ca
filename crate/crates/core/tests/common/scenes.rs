//! On-disk pipeline fixtures built from synthetic scenes.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use plateguard::detection::write_detections;
use plateguard::engine::EngineConfig;
use plateguard::ocr::GlyphAtlas;
use plateguard::synth::{gen_scene, random_scene_spec, render_frame, BikeSpec, Scene, SceneSpec, SplitMix64, SynthError};

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 360;

pub fn compliant(plate: &str) -> BikeSpec {
    BikeSpec {
        has_helmet: true,
        has_no_helmet_rider: false,
        n_mirrors: 2,
        has_plate: true,
        plate_text: Some(plate.to_string()),
    }
}

/// A rider without a helmet on an otherwise compliant bike.
pub fn helmetless(plate: &str) -> BikeSpec {
    BikeSpec {
        has_helmet: false,
        has_no_helmet_rider: true,
        ..compliant(plate)
    }
}

pub fn scene(frame_id: u64, bikes: Vec<BikeSpec>, atlas: &GlyphAtlas) -> Scene {
    let spec = SceneSpec {
        frame_id,
        width: WIDTH,
        height: HEIGHT,
        bikes,
        min_mirrors: 1,
        seed: 1000 + frame_id,
    };
    gen_scene(&spec, &EngineConfig::default(), atlas).expect("fixture scene fits")
}

/// Writes `frames/NNNNNN.png` and `detections.jsonl` under `dir`.
pub fn write_fixture(dir: &Path, scenes: &[Scene], atlas: &GlyphAtlas) -> (PathBuf, PathBuf) {
    let frames = dir.join("frames");
    fs::create_dir_all(&frames).unwrap();
    for s in scenes {
        let img = render_frame(s, atlas).unwrap();
        img.save_png(frames.join(format!("{:06}.png", s.detections.frame_id))).unwrap();
    }
    let (w, h) = scenes.first().map_or((WIDTH, HEIGHT), |s| (s.detections.width, s.detections.height));
    let det_path = dir.join("detections.jsonl");
    let out = BufWriter::new(fs::File::create(&det_path).unwrap());
    write_detections(out, w, h, scenes.iter().map(|s| &s.detections)).unwrap();
    (frames, det_path)
}

/// Random readable-plate scenes of the given size with at most
/// `max_detections` detections each.
pub fn random_scenes(n: usize, seed: u64, size: (u32, u32), max_detections: usize, atlas: &GlyphAtlas) -> Vec<Scene> {
    let mut rng = SplitMix64::new(seed);
    let cfg = EngineConfig::default();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let spec = random_scene_spec(&mut rng, out.len() as u64, size, 2, true);
        match gen_scene(&spec, &cfg, atlas) {
            Ok(s) if s.detections.detections.len() <= max_detections => out.push(s),
            Ok(_) | Err(SynthError::Unplaceable { .. }) => continue,
            Err(e) => panic!("scene generation failed: {e}"),
        }
    }
    out
}
