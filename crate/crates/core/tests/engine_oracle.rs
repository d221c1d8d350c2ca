mod common;

use common::engine::{evaluate, flatten, random_config, random_frame};
use plateguard::detection::{ClassLabel, Detection};
use plateguard::engine::{evaluate_frame, head_region, EngineConfig, ViolationKind};
use plateguard::geometry::BBox;
use plateguard::ocr::GlyphAtlas;
use plateguard::synth::{gen_scene, random_scene_spec, SplitMix64};

#[test]
fn engine_matches_rule_oracle_on_cluttered_frames() {
    let mut rng = SplitMix64::new(2024);
    let mut exercised = [0usize; 3];
    for i in 0..1000 {
        let frame = random_frame(&mut rng, i);
        let cfg = random_config(&mut rng);
        let expected = evaluate(&frame, &cfg);
        assert_eq!(flatten(&evaluate_frame(&frame, &cfg)), expected, "frame {i}: {frame:?} {cfg:?}");
        for e in &expected {
            exercised[0] += e.flags.len();
            exercised[1] += e.helmets.len() + e.no_helmets.len() + e.mirrors.len();
            exercised[2] += e.plate.is_some() as usize;
        }
    }
    assert!(exercised.iter().all(|&n| n > 100), "generator too sparse: {exercised:?}");
}

#[test]
fn engine_matches_generated_truth() {
    let atlas = GlyphAtlas::builtin();
    let cfg = EngineConfig::default();
    let mut rng = SplitMix64::new(5);
    let mut checked = 0;
    for i in 0.. {
        if checked == 1000 {
            break;
        }
        let spec = random_scene_spec(&mut rng, i, (1280, 720), 4, false);
        let Ok(scene) = gen_scene(&spec, &cfg, &atlas) else { continue };
        checked += 1;
        let flags: Vec<_> = evaluate_frame(&scene.detections, &cfg).into_iter().flat_map(|v| v.flags).collect();
        assert_eq!(flags, scene.truth, "scene {i}");
    }
}

#[test]
fn accessories_and_plates_are_exclusive() {
    let mut rng = SplitMix64::new(77);
    for i in 0..500 {
        let frame = random_frame(&mut rng, i);
        let verdicts = evaluate_frame(&frame, &EngineConfig::default());
        let mut seen: Vec<&Detection> = Vec::new();
        for v in &verdicts {
            let g = &v.group;
            for d in g.helmets.iter().chain(&g.no_helmets).chain(&g.mirrors).chain(g.plate.iter()) {
                assert!(!seen.contains(&d), "{d:?} in two groups");
                seen.push(d);
            }
        }
    }
}

#[test]
fn adding_a_helmet_never_adds_a_helmet_flag() {
    let mut rng = SplitMix64::new(8);
    let cfg = EngineConfig::default();
    for i in 0..500 {
        let frame = random_frame(&mut rng, i);
        let bikes: Vec<BBox> = frame.of_class(ClassLabel::Bike).filter(|b| b.confidence >= 0.61).map(|b| b.bbox).collect();
        if bikes.is_empty() {
            continue;
        }
        let target = bikes[rng.below(bikes.len() as u64) as usize];
        let region = head_region(&target, &cfg);
        let (cx, cy) = (rng.uniform(region.x1, region.x2), rng.uniform(region.y1, region.y2));
        let helmet = BBox::new(cx - 5.0, cy - 5.0, cx + 5.0, cy + 5.0).unwrap();
        let mut more = frame.clone();
        more.detections.push(Detection::new(i, ClassLabel::Helmet, helmet, 0.9));

        let helmet_flags = |f| {
            evaluate_frame(f, &cfg)
                .iter()
                .map(|v| v.flags.iter().any(|f| f.kind == ViolationKind::NoHelmet))
                .collect::<Vec<_>>()
        };
        let (before, after) = (helmet_flags(&frame), helmet_flags(&more));
        for (b, a) in before.iter().zip(&after) {
            assert!(!a || *b, "frame {i}: helmet created a flag");
        }
    }
}

#[test]
fn raising_min_mirrors_never_removes_mirror_flags() {
    let mut rng = SplitMix64::new(9);
    for i in 0..500 {
        let frame = random_frame(&mut rng, i);
        let mirror_flags = |min| {
            let cfg = EngineConfig {
                min_mirrors: min,
                ..EngineConfig::default()
            };
            evaluate_frame(&frame, &cfg)
                .iter()
                .map(|v| v.flags.iter().any(|f| f.kind == ViolationKind::MissingMirror))
                .collect::<Vec<_>>()
        };
        for min in 0..4 {
            let (lo, hi) = (mirror_flags(min), mirror_flags(min + 1));
            assert!(lo.iter().zip(&hi).all(|(l, h)| !l || *h), "frame {i}, min {min}");
        }
    }
}
