//! Brute-force detection metrics: every confidence cut is re-matched from
//! scratch and the PR envelope is evaluated point by point.

use plateguard::detection::{ClassLabel, Detection, FrameDetections};
use plateguard::geometry::BBox;
use plateguard::synth::SplitMix64;

fn class_boxes(frames: &[FrameDetections], frame_id: u64, class: ClassLabel) -> Vec<Detection> {
    frames
        .iter()
        .filter(|f| f.frame_id == frame_id)
        .flat_map(|f| f.detections.iter().filter(|d| d.class == class).cloned())
        .collect()
}

/// True positives among predictions with confidence `>= cut`.
fn true_positives(preds: &[FrameDetections], truth: &[FrameDetections], class: ClassLabel, thr: f64, cut: f64) -> usize {
    let mut tp = 0;
    for f in preds {
        let mut ps: Vec<(usize, Detection)> = class_boxes(preds, f.frame_id, class)
            .into_iter()
            .enumerate()
            .filter(|(_, d)| d.confidence >= cut)
            .collect();
        ps.sort_by(|a, b| b.1.confidence.partial_cmp(&a.1.confidence).unwrap().then(a.0.cmp(&b.0)));
        let gts = class_boxes(truth, f.frame_id, class);
        let mut used = vec![false; gts.len()];
        for (_, p) in ps {
            let mut best: Option<usize> = None;
            for j in 0..gts.len() {
                let iou = p.bbox.iou(&gts[j].bbox);
                if used[j] || iou < thr {
                    continue;
                }
                if best.is_none_or(|b| iou > p.bbox.iou(&gts[b].bbox)) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                used[j] = true;
                tp += 1;
            }
        }
    }
    tp
}

fn n_truth(truth: &[FrameDetections], class: ClassLabel) -> usize {
    truth.iter().map(|f| f.detections.iter().filter(|d| d.class == class).count()).sum()
}

/// AP for one class at one IoU threshold, `None` without ground truth.
pub fn ap(preds: &[FrameDetections], truth: &[FrameDetections], class: ClassLabel, thr: f64) -> Option<f64> {
    let n_gt = n_truth(truth, class);
    if n_gt == 0 {
        return None;
    }
    let mut cuts: Vec<f64> = preds
        .iter()
        .flat_map(|f| f.detections.iter().filter(|d| d.class == class).map(|d| d.confidence))
        .collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();
    let points: Vec<(f64, f64)> = cuts
        .iter()
        .map(|&c| {
            let n = preds
                .iter()
                .flat_map(|f| f.detections.iter())
                .filter(|d| d.class == class && d.confidence >= c)
                .count();
            let tp = true_positives(preds, truth, class, thr, c) as f64;
            (tp / n_gt as f64, tp / n as f64)
        })
        .collect();
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in recalls {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    Some(area)
}

pub fn thresholds() -> Vec<f64> {
    vec![0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
}

/// `(mAP@.50, mAP@.50-.95)` over classes with ground truth.
pub fn map(preds: &[FrameDetections], truth: &[FrameDetections]) -> (Option<f64>, Option<f64>) {
    let per_thr: Vec<f64> = thresholds()
        .iter()
        .filter_map(|&t| {
            let aps: Vec<f64> = ClassLabel::ALL.iter().filter_map(|&c| ap(preds, truth, c, t)).collect();
            (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
        })
        .collect();
    if per_thr.is_empty() {
        return (None, None);
    }
    (Some(per_thr[0]), Some(per_thr.iter().sum::<f64>() / per_thr.len() as f64))
}

fn grid_box(rng: &mut SplitMix64) -> BBox {
    let x = rng.below(4) as f64 * 10.0;
    let y = rng.below(4) as f64 * 10.0;
    let w = 10.0 + rng.below(3) as f64 * 5.0;
    let h = 10.0 + rng.below(3) as f64 * 5.0;
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Small instance: at most 3 ground truths and 5 predictions per class over
/// one or two frames, boxes on a coarse grid so exact IoU thresholds occur.
pub fn random_instance(rng: &mut SplitMix64) -> (Vec<FrameDetections>, Vec<FrameDetections>) {
    let n_frames = 1 + rng.below(2);
    let classes = [ClassLabel::Helmet, ClassLabel::Bike];
    let n_classes = 1 + rng.below(2) as usize;
    let mut truth: Vec<FrameDetections> = (0..n_frames).map(|i| FrameDetections::new(i, 100, 100)).collect();
    let mut preds = truth.clone();
    for &class in &classes[..n_classes] {
        let mut gts: Vec<(usize, BBox)> = Vec::new();
        for _ in 0..rng.below(4) {
            let f = rng.below(n_frames) as usize;
            let b = grid_box(rng);
            gts.push((f, b));
            truth[f].detections.push(Detection::new(f as u64, class, b, 1.0));
        }
        for _ in 0..rng.below(6) {
            let f = rng.below(n_frames) as usize;
            let b = match gts.iter().filter(|g| g.0 == f).nth(rng.below(3) as usize) {
                Some(&(_, g)) if rng.chance(0.6) => {
                    let dx = [0.0, 1.0, 2.5, 5.0][rng.below(4) as usize];
                    BBox::new(g.x1() + dx, g.y1(), g.x2() + dx, g.y2()).unwrap()
                }
                _ => grid_box(rng),
            };
            let conf = if rng.chance(0.4) {
                [0.5, 0.7, 0.9][rng.below(3) as usize]
            } else {
                rng.uniform(0.01, 1.0)
            };
            preds[f].detections.push(Detection::new(f as u64, class, b, conf));
        }
    }
    (preds, truth)
}
