//! Detection metrics (precision, recall, AP, mAP), OCR accuracy and the
//! preprocessing ablation.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::detection::{ClassLabel, FrameDetections};
use crate::ocr::{filter_allowlist, read_plate, GlyphAtlas};
use crate::preprocess::{bilateral_filter, clahe, preprocess_plate, to_grayscale, PreprocessConfig, PreprocessError};
use crate::raster::GrayImage;
use crate::synth::LabeledPlate;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{pred} predictions for {truth} ground-truth texts")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("class {0} has no ground truth")]
    NoGroundTruth(ClassLabel),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Scored predictions of one class over all frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ClassMatches {
    /// `(confidence, is_true_positive)` in matching order.
    pub scored: Vec<(f64, bool)>,
    pub n_truth: usize,
}

impl ClassMatches {
    pub fn true_positives(&self) -> usize {
        self.scored.iter().filter(|(_, tp)| *tp).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub per_class: BTreeMap<ClassLabel, ClassMatches>,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_sweep() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Greedy matching per frame and class: predictions by descending confidence
/// each take the unmatched ground truth of highest IoU at or above the
/// threshold. Frames are paired by `frame_id`.
pub fn match_detections(preds: &[FrameDetections], truth: &[FrameDetections], iou_threshold: f64) -> MatchResult {
    let mut result = MatchResult::default();
    let truth_by_frame: HashMap<u64, &FrameDetections> = truth.iter().map(|f| (f.frame_id, f)).collect();
    for f in truth {
        for d in &f.detections {
            result.per_class.entry(d.class).or_default().n_truth += 1;
        }
    }
    for f in preds {
        let gt_frame = truth_by_frame.get(&f.frame_id);
        for class in ClassLabel::ALL {
            let mut ps: Vec<_> = f.of_class(class).collect();
            if ps.is_empty() {
                continue;
            }
            ps.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
            let gts: Vec<_> = gt_frame.map(|g| g.of_class(class).collect()).unwrap_or_default();
            let mut used = vec![false; gts.len()];
            let entry = result.per_class.entry(class).or_default();
            for p in ps {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in gts.iter().enumerate() {
                    let iou = p.bbox.iou(&g.bbox);
                    if !used[j] && iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((j, iou));
                    }
                }
                if let Some((j, _)) = best {
                    used[j] = true;
                }
                entry.scored.push((p.confidence, best.is_some()));
            }
        }
    }
    result
}

/// `(recall, precision)` after each distinct confidence level, highest first.
/// Predictions sharing a confidence enter the curve together.
fn pr_curve(m: &ClassMatches) -> Vec<(f64, f64)> {
    let mut scored = m.scored.clone();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut n) = (0usize, 0usize);
    for (i, &(conf, is_tp)) in scored.iter().enumerate() {
        n += 1;
        tp += is_tp as usize;
        if scored.get(i + 1).is_none_or(|next| next.0 != conf) {
            points.push((tp as f64 / m.n_truth as f64, tp as f64 / n as f64));
        }
    }
    points
}

/// All-point interpolated AP: precision at recall `r` is the best precision
/// at any recall `>= r`, integrated over recall.
pub fn average_precision(m: &MatchResult, class: ClassLabel) -> Result<f64, MetricsError> {
    let cm = m
        .per_class
        .get(&class)
        .filter(|c| c.n_truth > 0)
        .ok_or(MetricsError::NoGroundTruth(class))?;
    let points = pr_curve(cm);
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    let mut next_recall = points.last().map_or(0.0, |p| p.0);
    for &(r, p) in points.iter().rev() {
        ap += (next_recall - r) * envelope;
        envelope = envelope.max(p);
        next_recall = r;
    }
    ap += next_recall * envelope;
    Ok(ap)
}

/// Precision and recall over predictions with confidence `>= min_confidence`.
pub fn precision_recall(m: &MatchResult, class: ClassLabel, min_confidence: f64) -> (f64, f64) {
    let Some(cm) = m.per_class.get(&class) else {
        return (0.0, 0.0);
    };
    let kept: Vec<_> = cm.scored.iter().filter(|(c, _)| *c >= min_confidence).collect();
    let tp = kept.iter().filter(|(_, t)| *t).count() as f64;
    let precision = if kept.is_empty() { 0.0 } else { tp / kept.len() as f64 };
    let recall = if cm.n_truth == 0 { 0.0 } else { tp / cm.n_truth as f64 };
    (precision, recall)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: ClassLabel,
    pub n_truth: usize,
    pub n_pred: usize,
    pub precision: f64,
    pub recall: f64,
    /// `None` when the class has no ground truth.
    pub ap50: Option<f64>,
    pub ap50_95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub classes: Vec<ClassReport>,
    /// Means over classes with ground truth; `None` when there are none.
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// AP per class at IoU 0.50, mAP@.50 and mAP@.50-.95. Precision and recall
/// are taken at IoU 0.50 over predictions with confidence `>= min_confidence`.
pub fn map_suite(preds: &[FrameDetections], truth: &[FrameDetections], min_confidence: f64) -> MapReport {
    let sweep: Vec<MatchResult> = iou_sweep().iter().map(|&t| match_detections(preds, truth, t)).collect();
    let mut classes = Vec::new();
    for class in ClassLabel::ALL {
        let Some(cm) = sweep[0].per_class.get(&class) else {
            continue;
        };
        let aps: Vec<f64> = sweep.iter().filter_map(|m| average_precision(m, class).ok()).collect();
        let (precision, recall) = precision_recall(&sweep[0], class, min_confidence);
        classes.push(ClassReport {
            class,
            n_truth: cm.n_truth,
            n_pred: cm.scored.len(),
            precision,
            recall,
            ap50: aps.first().copied(),
            ap50_95: mean(&aps),
        });
    }
    // mean over thresholds of the per-threshold class mean
    let per_threshold: Vec<f64> = sweep
        .iter()
        .filter_map(|m| {
            let aps: Vec<f64> = ClassLabel::ALL.iter().filter_map(|&c| average_precision(m, c).ok()).collect();
            mean(&aps)
        })
        .collect();
    MapReport {
        map50: per_threshold.first().copied(),
        map50_95: mean(&per_threshold),
        classes,
    }
}

/// Fraction of exact matches after allowlist normalization.
pub fn ocr_accuracy<P: AsRef<str>, T: AsRef<str>>(pred: &[P], truth: &[T]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| filter_allowlist(p.as_ref()) == filter_allowlist(t.as_ref()))
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationStage {
    None,
    Grayscale,
    Bilateral,
    Clahe,
    Full,
}

impl AblationStage {
    pub const ALL: [AblationStage; 5] = [
        AblationStage::None,
        AblationStage::Grayscale,
        AblationStage::Bilateral,
        AblationStage::Clahe,
        AblationStage::Full,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationStage::None => "none",
            AblationStage::Grayscale => "grayscale",
            AblationStage::Bilateral => "grayscale+bilateral",
            AblationStage::Clahe => "grayscale+bilateral+clahe",
            AblationStage::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub stage: AblationStage,
    pub stage_name: &'static str,
    pub accuracy: f64,
}

/// Recognizer input for every ablation stage of one crop, in stage order.
/// The raw crop is fed through its green channel.
fn stage_images(img: &crate::raster::RgbImage, cfg: &PreprocessConfig) -> Result<Vec<GrayImage>, MetricsError> {
    let gray = to_grayscale(img);
    let smooth = bilateral_filter(&gray, cfg);
    let eq = clahe(&smooth, cfg)?;
    let (full, _) = preprocess_plate(img, cfg)?;
    Ok(vec![img.green_channel(), gray, smooth, eq, full])
}

/// OCR accuracy after each cumulative preprocessing stage.
pub fn run_ablation(
    corpus: &[LabeledPlate],
    atlas: &GlyphAtlas,
    cfg: &PreprocessConfig,
) -> Result<Vec<AblationRow>, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    cfg.validate()?;
    let mut reads: Vec<Vec<String>> = vec![Vec::with_capacity(corpus.len()); AblationStage::ALL.len()];
    for sample in corpus {
        for (i, img) in stage_images(&sample.image, cfg)?.iter().enumerate() {
            let text = read_plate(img, atlas).map(|r| r.corrected_text).unwrap_or_default();
            reads[i].push(text);
        }
    }
    let truth: Vec<&str> = corpus.iter().map(|s| s.text.as_str()).collect();
    AblationStage::ALL
        .iter()
        .zip(&reads)
        .map(|(&stage, texts)| {
            Ok(AblationRow {
                stage,
                stage_name: stage.name(),
                accuracy: ocr_accuracy(texts, &truth)?,
            })
        })
        .collect()
}
