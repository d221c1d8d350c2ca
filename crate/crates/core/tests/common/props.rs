//! Property bodies shared by the proptest suites and the acceptance runner.

use std::collections::HashMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use plateguard::engine::ViolationKind;
use plateguard::geometry::BBox;
use plateguard::ocr::{correct_by_position, filter_allowlist, parse_plate_format};
use plateguard::pipeline::{DedupKey, Deduper};

pub const CASES: u32 = 500;

pub fn config() -> Config {
    Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn bbox() -> impl Strategy<Value = BBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.01..300.0f64, 0.01..300.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

/// Boxes on a coarse integer grid, so identical and touching pairs are common.
pub fn grid_bbox() -> impl Strategy<Value = BBox> {
    (0..6i32, 0..6i32, 1..4i32, 1..4i32)
        .prop_map(|(x, y, w, h)| BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap())
}

pub fn box_pair() -> impl Strategy<Value = (BBox, BBox)> {
    prop_oneof![(bbox(), bbox()), (grid_bbox(), grid_bbox())]
}

pub fn geometry((a, b): (BBox, BBox)) -> Result<(), TestCaseError> {
    let ab = a.iou(&b);
    prop_assert!((0.0..=1.0).contains(&ab), "iou {ab} out of range");
    prop_assert_eq!(ab, b.iou(&a));
    prop_assert_eq!(a.iou(&a), 1.0);
    prop_assert_eq!(ab == 1.0, a == b);
    prop_assert_eq!(a.center_distance(&b), b.center_distance(&a));
    prop_assert_eq!(a.expand(0.0, 0.0, 0.0, 0.0, (2000, 2000)).ok(), a.clip((2000, 2000)).ok());
    if let Ok(c) = a.expand(0.3, 0.3, 0.6, 0.1, (640, 480)) {
        prop_assert!(c.x1() >= 0.0 && c.y1() >= 0.0 && c.x2() <= 640.0 && c.y2() <= 480.0);
    }
    Ok(())
}

pub fn any_text() -> impl Strategy<Value = String> {
    prop_oneof![".{0,24}", "[A-Za-z0-9 |*.-]{0,16}"]
}

pub fn allowlist(s: String) -> Result<(), TestCaseError> {
    let once = filter_allowlist(&s);
    prop_assert_eq!(filter_allowlist(&once), once.clone());
    prop_assert!(once.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit()));
    Ok(())
}

/// Filtered plate-like text: arbitrary runs and near-grammatical strings.
pub fn plate_like() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Z0-9]{0,12}",
        "[A-Z0258OISBZ]{2}[0-9OISBZ]{2}[A-Z0-9]{1,3}[0-9OISBZ]{1,4}",
    ]
}

pub fn correction(s: String) -> Result<(), TestCaseError> {
    let (out, changed) = correct_by_position(&s);
    prop_assert_eq!(out.chars().count(), s.chars().count());
    if changed {
        prop_assert!(parse_plate_format(&out).is_ok(), "{s:?} -> {out:?} changed but does not parse");
    } else {
        prop_assert_eq!(&out, &s);
    }
    Ok(())
}

/// `(window, [(key, frame step)])`; frames are the running sum of steps.
pub fn dedup_case() -> impl Strategy<Value = (u64, Vec<(u8, u64)>)> {
    (0..20u64, prop::collection::vec((0..4u8, 0..8u64), 0..60))
}

fn key(k: u8) -> DedupKey {
    let b = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
    match k {
        0 => DedupKey::new(ViolationKind::NoHelmet, "KA01AB1234", &b),
        1 => DedupKey::new(ViolationKind::MissingMirror, "KA01AB1234", &b),
        2 => DedupKey::new(ViolationKind::NoHelmet, "", &b),
        _ => DedupKey::new(ViolationKind::NoHelmet, "MH12DE1433", &b),
    }
}

pub fn dedup((window, steps): (u64, Vec<(u8, u64)>)) -> Result<(), TestCaseError> {
    let mut d = Deduper::new(window);
    let mut last_kept: HashMap<u8, u64> = HashMap::new();
    let mut frame = 0u64;
    for (k, step) in steps {
        frame += step;
        let kept = d.admit(key(k), frame);
        let expected = match last_kept.get(&k) {
            _ if window == 0 => true,
            None => true,
            Some(&prev) => frame - prev >= window,
        };
        prop_assert_eq!(kept, expected, "key {} at frame {} window {}", k, frame, window);
        if kept {
            last_kept.insert(k, frame);
        }
    }
    Ok(())
}

/// Runs one property for `CASES` cases; `Err` carries the minimal failure.
pub fn run<S: Strategy>(strategy: S, body: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    TestRunner::new(config()).run(&strategy, body).map_err(|e| e.to_string())
}
