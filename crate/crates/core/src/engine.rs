//! Violation rules: attributes accessories to bikes by spatial proximity,
//! flags helmet and mirror violations and picks the plate of each bike.
//!
//! Gating regions, relative to a bike box of width `w` and height `h`:
//!
//! * head region: `[x1, x2] x [y1 - head_region_up*h, y1 + head_region_down*h]`
//! * mirror region: `[x1 - mirror_region_horizontal*w, x2 + mirror_region_horizontal*w]
//!   x [y1, y1 + mirror_region_vertical_upper*h]`
//!
//! An accessory is a candidate for every bike whose region contains its
//! center and is assigned to the candidate with the nearest center (earlier
//! bike on ties), so each accessory lands in at most one group.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{filter_by_thresholds, ClassLabel, ConfidenceThresholds, Detection, FrameDetections};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    pub confidence: ConfidenceThresholds,
    pub min_mirrors: u32,
    pub head_region_up: f64,
    pub head_region_down: f64,
    pub mirror_region_horizontal: f64,
    pub mirror_region_vertical_upper: f64,
    /// Distance gate for non-overlapping plates, in multiples of the bike diagonal.
    pub plate_distance_factor: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            confidence: ConfidenceThresholds::default(),
            min_mirrors: 1,
            head_region_up: 0.6,
            head_region_down: 0.4,
            mirror_region_horizontal: 0.2,
            mirror_region_vertical_upper: 0.6,
            plate_distance_factor: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fractions = [
            ("head_region_up", self.head_region_up),
            ("head_region_down", self.head_region_down),
            ("mirror_region_horizontal", self.mirror_region_horizontal),
            ("mirror_region_vertical_upper", self.mirror_region_vertical_upper),
            ("plate_distance_factor", self.plate_distance_factor),
        ];
        for (name, v) in fractions {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EngineError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        let thresholds = std::iter::once(self.confidence.global).chain(self.confidence.per_class.values().copied());
        for t in thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(EngineError::InvalidConfig(format!(
                    "confidence threshold {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Closed axis-aligned rectangle. Unlike [`BBox`] it may be degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Region {
    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }
}

pub fn head_region(bike: &BBox, cfg: &EngineConfig) -> Region {
    let h = bike.height();
    Region {
        x1: bike.x1(),
        y1: bike.y1() - cfg.head_region_up * h,
        x2: bike.x2(),
        y2: bike.y1() + cfg.head_region_down * h,
    }
}

pub fn mirror_region(bike: &BBox, cfg: &EngineConfig) -> Region {
    let (w, h) = (bike.width(), bike.height());
    Region {
        x1: bike.x1() - cfg.mirror_region_horizontal * w,
        y1: bike.y1(),
        x2: bike.x2() + cfg.mirror_region_horizontal * w,
        y2: bike.y1() + cfg.mirror_region_vertical_upper * h,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BikeGroup {
    pub bike: Detection,
    pub helmets: Vec<Detection>,
    pub no_helmets: Vec<Detection>,
    pub mirrors: Vec<Detection>,
    pub plate: Option<Detection>,
}

impl BikeGroup {
    fn new(bike: Detection) -> Self {
        Self {
            bike,
            helmets: Vec::new(),
            no_helmets: Vec::new(),
            mirrors: Vec::new(),
            plate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoHelmet,
    MissingMirror,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::NoHelmet => "no_helmet",
            ViolationKind::MissingMirror => "missing_mirror",
        }
    }
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ViolationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_helmet" => Ok(ViolationKind::NoHelmet),
            "missing_mirror" => Ok(ViolationKind::MissingMirror),
            other => Err(format!("unknown violation type {other:?}")),
        }
    }
}

/// A flagged violation. `evidence` holds the no-helmet detections for
/// helmet flags (empty when the flag comes from absent headwear) and the
/// mirrors that were found for mirror flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationFlag {
    pub kind: ViolationKind,
    pub bike_bbox: BBox,
    pub evidence: Vec<Detection>,
}

/// One bike of a frame with its violations, in the order they are checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameVerdict {
    pub group: BikeGroup,
    pub flags: Vec<ViolationFlag>,
}

/// Index of the nearest bike whose region contains `center`; the first wins ties.
fn nearest_candidate(
    bikes: &[&Detection],
    regions: &[Region],
    accessory: &Detection,
) -> Option<usize> {
    let center = accessory.bbox.center();
    let mut best: Option<(usize, f64)> = None;
    for (i, (bike, region)) in bikes.iter().zip(regions).enumerate() {
        if !region.contains(center) {
            continue;
        }
        let d = bike.bbox.center_distance(&accessory.bbox);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Builds one group per bike, in input order. Expects confidence-filtered input.
pub fn group_by_bike(dets: &FrameDetections, cfg: &EngineConfig) -> Vec<BikeGroup> {
    let bikes: Vec<&Detection> = dets.of_class(ClassLabel::Bike).collect();
    let heads: Vec<Region> = bikes.iter().map(|b| head_region(&b.bbox, cfg)).collect();
    let mirrors: Vec<Region> = bikes.iter().map(|b| mirror_region(&b.bbox, cfg)).collect();
    let mut groups: Vec<BikeGroup> = bikes.iter().map(|b| BikeGroup::new((*b).clone())).collect();

    for det in &dets.detections {
        let regions = match det.class {
            ClassLabel::Helmet | ClassLabel::NoHelmet => &heads,
            ClassLabel::Mirror => &mirrors,
            ClassLabel::Bike | ClassLabel::NumberPlate => continue,
        };
        let Some(i) = nearest_candidate(&bikes, regions, det) else {
            continue;
        };
        let g = &mut groups[i];
        match det.class {
            ClassLabel::Helmet => g.helmets.push(det.clone()),
            ClassLabel::NoHelmet => g.no_helmets.push(det.clone()),
            ClassLabel::Mirror => g.mirrors.push(det.clone()),
            _ => unreachable!(),
        }
    }
    groups
}

/// Flags a helmet violation when a no-helmet detection is attributed to the
/// bike, or when no headwear at all was found. An explicit no-helmet wins
/// over a helmet on the same bike (rider and pillion).
pub fn check_helmet(group: &BikeGroup) -> Option<ViolationFlag> {
    let flagged = !group.no_helmets.is_empty() || group.helmets.is_empty();
    flagged.then(|| ViolationFlag {
        kind: ViolationKind::NoHelmet,
        bike_bbox: group.bike.bbox,
        evidence: group.no_helmets.clone(),
    })
}

pub fn check_mirrors(group: &BikeGroup, cfg: &EngineConfig) -> Option<ViolationFlag> {
    ((group.mirrors.len() as u64) < cfg.min_mirrors as u64).then(|| ViolationFlag {
        kind: ViolationKind::MissingMirror,
        bike_bbox: group.bike.bbox,
        evidence: group.mirrors.clone(),
    })
}

/// Picks a plate for `bike` among `plates` whose `available` flag is set.
///
/// Overlapping plates win by IoU; otherwise the nearest plate within
/// `plate_distance_factor` bike diagonals. Ties go to higher confidence, then
/// to the earlier plate.
fn select_plate(
    bike: &BBox,
    plates: &[&Detection],
    available: &[bool],
    cfg: &EngineConfig,
) -> Option<usize> {
    let mut best_overlap: Option<(usize, f64)> = None;
    let mut best_near: Option<(usize, f64)> = None;
    let gate = cfg.plate_distance_factor * bike.diagonal();
    // Strict comparisons keep the earliest plate among full ties.
    let better = |cand: (usize, f64), cur: Option<(usize, f64)>, larger: bool| match cur {
        None => true,
        Some((ci, cv)) => {
            let (a, b) = if larger { (cand.1, cv) } else { (cv, cand.1) };
            a > b || (a == b && plates[cand.0].confidence > plates[ci].confidence)
        }
    };
    for (i, p) in plates.iter().enumerate() {
        if !available[i] {
            continue;
        }
        let iou = p.bbox.iou(bike);
        if iou > 0.0 {
            if better((i, iou), best_overlap, true) {
                best_overlap = Some((i, iou));
            }
        } else {
            let d = p.bbox.center_distance(bike);
            if d <= gate && better((i, d), best_near, false) {
                best_near = Some((i, d));
            }
        }
    }
    best_overlap.or(best_near).map(|(i, _)| i)
}

/// The plate this bike would take from `plates`, ignoring other bikes.
pub fn associate_plate(group: &BikeGroup, plates: &[Detection], cfg: &EngineConfig) -> Option<Detection> {
    let refs: Vec<&Detection> = plates.iter().collect();
    let available = vec![true; refs.len()];
    select_plate(&group.bike.bbox, &refs, &available, cfg).map(|i| plates[i].clone())
}

/// Filter, group, check and associate plates for one frame.
///
/// Plates are handed out greedily over bikes in input order, each plate to
/// at most one bike.
pub fn evaluate_frame(dets: &FrameDetections, cfg: &EngineConfig) -> Vec<FrameVerdict> {
    let kept = filter_by_thresholds(dets, &cfg.confidence);
    let mut groups = group_by_bike(&kept, cfg);
    let plates: Vec<&Detection> = kept.of_class(ClassLabel::NumberPlate).collect();
    let mut available = vec![true; plates.len()];

    groups
        .drain(..)
        .map(|mut group| {
            let mut flags = Vec::new();
            flags.extend(check_helmet(&group));
            flags.extend(check_mirrors(&group, cfg));
            if let Some(i) = select_plate(&group.bike.bbox, &plates, &available, cfg) {
                available[i] = false;
                group.plate = Some(plates[i].clone());
            }
            FrameVerdict { group, flags }
        })
        .collect()
}
