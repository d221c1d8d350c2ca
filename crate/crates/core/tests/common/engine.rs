//! Straight-line restatement of the violation rules, plus a generator of
//! cluttered frames with overlapping bikes, boundary cases and ties.

use plateguard::detection::{ClassLabel, Detection, FrameDetections};
use plateguard::engine::{EngineConfig, FrameVerdict, ViolationKind};
use plateguard::geometry::BBox;
use plateguard::synth::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub bike: Detection,
    pub helmets: Vec<Detection>,
    pub no_helmets: Vec<Detection>,
    pub mirrors: Vec<Detection>,
    pub plate: Option<Detection>,
    pub flags: Vec<(ViolationKind, BBox, Vec<Detection>)>,
}

fn in_head(bike: &BBox, (x, y): (f64, f64), cfg: &EngineConfig) -> bool {
    let h = bike.y2() - bike.y1();
    let top = bike.y1() - cfg.head_region_up * h;
    let bottom = bike.y1() + cfg.head_region_down * h;
    bike.x1() <= x && x <= bike.x2() && top <= y && y <= bottom
}

fn in_mirror_zone(bike: &BBox, (x, y): (f64, f64), cfg: &EngineConfig) -> bool {
    let w = bike.x2() - bike.x1();
    let h = bike.y2() - bike.y1();
    let left = bike.x1() - cfg.mirror_region_horizontal * w;
    let right = bike.x2() + cfg.mirror_region_horizontal * w;
    left <= x && x <= right && bike.y1() <= y && y <= bike.y1() + cfg.mirror_region_vertical_upper * h
}

/// Bike index owning the accessory: a candidate no other candidate beats.
fn owner(bikes: &[Detection], acc: &Detection, cfg: &EngineConfig) -> Option<usize> {
    let c = acc.bbox.center();
    let candidate = |b: &Detection| match acc.class {
        ClassLabel::Helmet | ClassLabel::NoHelmet => in_head(&b.bbox, c, cfg),
        ClassLabel::Mirror => in_mirror_zone(&b.bbox, c, cfg),
        _ => false,
    };
    let cands: Vec<usize> = (0..bikes.len()).filter(|&i| candidate(&bikes[i])).collect();
    cands.iter().copied().find(|&i| {
        let di = bikes[i].bbox.center_distance(&acc.bbox);
        cands.iter().all(|&j| {
            let dj = bikes[j].bbox.center_distance(&acc.bbox);
            j == i || di < dj || (di == dj && i < j)
        })
    })
}

pub fn evaluate(frame: &FrameDetections, cfg: &EngineConfig) -> Vec<Expected> {
    let kept: Vec<Detection> = frame
        .detections
        .iter()
        .filter(|d| d.confidence >= cfg.confidence.for_class(d.class))
        .cloned()
        .collect();
    let bikes: Vec<Detection> = kept.iter().filter(|d| d.class == ClassLabel::Bike).cloned().collect();
    let plates: Vec<Detection> = kept.iter().filter(|d| d.class == ClassLabel::NumberPlate).cloned().collect();
    let mut taken = vec![false; plates.len()];

    let mut out = Vec::new();
    for (i, bike) in bikes.iter().enumerate() {
        let mine = |class: ClassLabel| -> Vec<Detection> {
            kept.iter()
                .filter(|d| d.class == class && owner(&bikes, d, cfg) == Some(i))
                .cloned()
                .collect()
        };
        let helmets = mine(ClassLabel::Helmet);
        let no_helmets = mine(ClassLabel::NoHelmet);
        let mirrors = mine(ClassLabel::Mirror);

        let mut flags = Vec::new();
        if !no_helmets.is_empty() || helmets.is_empty() {
            flags.push((ViolationKind::NoHelmet, bike.bbox, no_helmets.clone()));
        }
        if (mirrors.len() as u64) < cfg.min_mirrors as u64 {
            flags.push((ViolationKind::MissingMirror, bike.bbox, mirrors.clone()));
        }

        let free: Vec<usize> = (0..plates.len()).filter(|&k| !taken[k]).collect();
        let overlapping: Vec<usize> = free.iter().copied().filter(|&k| plates[k].bbox.iou(&bike.bbox) > 0.0).collect();
        let mut ranked: Vec<(usize, f64)> = if !overlapping.is_empty() {
            overlapping.iter().map(|&k| (k, -plates[k].bbox.iou(&bike.bbox))).collect()
        } else {
            let gate = cfg.plate_distance_factor * bike.bbox.diagonal();
            free.iter()
                .map(|&k| (k, plates[k].bbox.center_distance(&bike.bbox)))
                .filter(|&(_, d)| d <= gate)
                .collect()
        };
        ranked.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then(plates[b.0].confidence.partial_cmp(&plates[a.0].confidence).unwrap())
                .then(a.0.cmp(&b.0))
        });
        let plate = ranked.first().map(|&(k, _)| {
            taken[k] = true;
            plates[k].clone()
        });

        out.push(Expected {
            bike: bike.clone(),
            helmets,
            no_helmets,
            mirrors,
            plate,
            flags,
        });
    }
    out
}

/// The engine's verdicts in the oracle's shape.
pub fn flatten(verdicts: &[FrameVerdict]) -> Vec<Expected> {
    verdicts
        .iter()
        .map(|v| Expected {
            bike: v.group.bike.clone(),
            helmets: v.group.helmets.clone(),
            no_helmets: v.group.no_helmets.clone(),
            mirrors: v.group.mirrors.clone(),
            plate: v.group.plate.clone(),
            flags: v.flags.iter().map(|f| (f.kind, f.bike_bbox, f.evidence.clone())).collect(),
        })
        .collect()
}

fn quantized(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    // half-pixel grid makes equal distances and boundary hits common
    (rng.uniform(lo, hi) * 2.0).round() / 2.0
}

fn confidence(rng: &mut SplitMix64) -> f64 {
    const EDGE: [f64; 4] = [0.609, 0.610, 0.611, 1.0];
    if rng.chance(0.2) {
        EDGE[rng.below(4) as usize]
    } else {
        (rng.uniform(0.3, 1.0) * 1000.0).round() / 1000.0
    }
}

fn sized_box((cx, cy): (f64, f64), w: f64, h: f64) -> BBox {
    BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0).unwrap()
}

/// A frame with 0-4 bikes packed into a small area and accessories scattered
/// around their gating regions, including exact region edges.
pub fn random_frame(rng: &mut SplitMix64, frame_id: u64) -> FrameDetections {
    let mut f = FrameDetections::new(frame_id, 640, 480);
    let n_bikes = rng.below(5) as usize;
    let mut bikes: Vec<BBox> = Vec::new();
    for _ in 0..n_bikes {
        let b = if !bikes.is_empty() && rng.chance(0.15) {
            // a duplicate or mirrored twin produces exact distance ties
            let t = bikes[rng.below(bikes.len() as u64) as usize];
            let shift = if rng.chance(0.5) { 0.0 } else { t.width() };
            BBox::new(t.x1() + shift, t.y1(), t.x2() + shift, t.y2()).unwrap()
        } else {
            let (w, h) = (quantized(rng, 20.0, 150.0), quantized(rng, 30.0, 200.0));
            let (x, y) = (quantized(rng, 120.0, 380.0), quantized(rng, 120.0, 300.0));
            BBox::new(x, y, x + w, y + h).unwrap()
        };
        bikes.push(b);
    }
    let mut dets: Vec<Detection> = bikes
        .iter()
        .map(|b| Detection::new(frame_id, ClassLabel::Bike, *b, confidence(rng)))
        .collect();

    let n_acc = rng.below(10);
    for _ in 0..n_acc {
        let class = match rng.below(7) {
            0 | 1 => ClassLabel::Helmet,
            2 => ClassLabel::NoHelmet,
            3 | 4 => ClassLabel::Mirror,
            _ => ClassLabel::NumberPlate,
        };
        let center = if bikes.is_empty() || rng.chance(0.1) {
            (quantized(rng, 20.0, 600.0), quantized(rng, 20.0, 460.0))
        } else {
            let b = bikes[rng.below(bikes.len() as u64) as usize];
            let (w, h) = (b.width(), b.height());
            let on_edge = rng.chance(0.25);
            match class {
                ClassLabel::Helmet | ClassLabel::NoHelmet => {
                    let y = if on_edge {
                        [b.y1() - 0.6 * h, b.y1() + 0.4 * h][rng.below(2) as usize]
                    } else {
                        b.y1() + rng.uniform(-0.8, 0.6) * h
                    };
                    let x = if on_edge && rng.chance(0.5) { b.x2() } else { b.x1() + rng.uniform(-0.1, 1.1) * w };
                    (x, y)
                }
                ClassLabel::Mirror => {
                    let x = if on_edge {
                        [b.x1() - 0.2 * w, b.x2() + 0.2 * w][rng.below(2) as usize]
                    } else {
                        b.x1() + rng.uniform(-0.35, 1.35) * w
                    };
                    (x, b.y1() + rng.uniform(-0.1, 0.8) * h)
                }
                _ => {
                    let (cx, cy) = b.center();
                    (cx + rng.uniform(-1.0, 1.0) * w, cy + rng.uniform(-0.2, 1.2) * h)
                }
            }
        };
        let (w, h) = match class {
            ClassLabel::NumberPlate => (quantized(rng, 10.0, 60.0), quantized(rng, 6.0, 20.0)),
            _ => (quantized(rng, 4.0, 40.0), quantized(rng, 4.0, 40.0)),
        };
        dets.push(Detection::new(frame_id, class, sized_box(center, w, h), confidence(rng)));
    }
    rng.shuffle(&mut dets);
    f.detections = dets;
    f
}

/// Default config, or a perturbed one.
pub fn random_config(rng: &mut SplitMix64) -> EngineConfig {
    let mut cfg = EngineConfig::default();
    if rng.chance(0.5) {
        return cfg;
    }
    cfg.min_mirrors = rng.below(4) as u32;
    cfg.head_region_up = rng.uniform(0.0, 1.0);
    cfg.head_region_down = rng.uniform(0.0, 1.0);
    cfg.mirror_region_horizontal = rng.uniform(0.0, 0.5);
    cfg.mirror_region_vertical_upper = rng.uniform(0.0, 1.0);
    cfg.plate_distance_factor = rng.uniform(0.0, 2.0);
    if rng.chance(0.3) {
        let class = ClassLabel::ALL[rng.below(5) as usize];
        cfg.confidence.per_class.insert(class, rng.uniform(0.3, 0.9));
    }
    cfg
}

