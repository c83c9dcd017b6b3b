//! COCO-style detection metrics: greedy matching, 101-point interpolated
//! average precision, mAP(0.5) / mAP(0.5:0.95), and PSNR for restoration
//! checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::DetectionSet;
use crate::geometry::{area, iou_raw, BBox};
use crate::image::ImageBuffer;

/// Annotated box: class plus the COCO crowd flag. Crowd regions absorb
/// detections without counting as targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBox {
    pub bbox: BBox,
    pub class_id: u32,
    pub iscrowd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    pub image_id: u64,
    pub boxes: Vec<GtBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched a crowd region; excluded from both TP and FP counts.
    Ignored,
}

/// Greedy matching of one image's detections against its ground truth at
/// one IoU threshold.
///
/// Detections are visited in descending confidence order (ties stable by
/// input index). Each one matches the not-yet-matched same-class non-crowd
/// box with the highest IoU at or above the threshold; failing that, any
/// same-class crowd box at or above the threshold marks it [`MatchLabel::Ignored`].
/// Labels are returned in the input detection order.
pub fn match_detections(
    dets: &DetectionSet,
    gt: &GroundTruthSet,
    iou_threshold: f64,
) -> Result<Vec<MatchLabel>> {
    if dets.image_id != gt.image_id {
        return Err(Error::invalid_argument(format!(
            "matching detections for image {} against ground truth for image {}",
            dets.image_id, gt.image_id
        )));
    }
    let mut order: Vec<usize> = (0..dets.detections.len()).collect();
    order.sort_by(|&a, &b| {
        dets.detections[b]
            .confidence
            .total_cmp(&dets.detections[a].confidence)
            .then_with(|| a.cmp(&b))
    });

    let mut gt_taken = vec![false; gt.boxes.len()];
    let mut labels = vec![MatchLabel::FalsePositive; dets.detections.len()];
    for &di in &order {
        let det = &dets.detections[di];
        let mut best: Option<(usize, f64)> = None;
        let mut crowd_hit = false;
        for (gi, g) in gt.boxes.iter().enumerate() {
            if g.class_id != det.class_id || area(&g.bbox) <= 0.0 {
                continue;
            }
            let overlap = iou_raw(&det.bbox, &g.bbox);
            if overlap < iou_threshold {
                continue;
            }
            if g.iscrowd {
                crowd_hit = true;
            } else if !gt_taken[gi] && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        labels[di] = match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                MatchLabel::TruePositive
            }
            None if crowd_hit => MatchLabel::Ignored,
            None => MatchLabel::FalsePositive,
        };
    }
    Ok(labels)
}

/// Precision/recall trace of one ranked detection list, with precision
/// interpolated onto the 101-point recall grid {0.00, 0.01, ..., 1.00}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub confidence: Vec<f64>,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub interpolated: Vec<f64>,
}

pub const RECALL_GRID_POINTS: usize = 101;

/// Build the PR curve for `(confidence, label)` records. Records are
/// ranked by descending confidence (stable for ties); crowd-ignored
/// records contribute nothing.
pub fn pr_curve(records: &[(f64, MatchLabel)], gt_count: usize) -> PrCurve {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].0.total_cmp(&records[a].0).then_with(|| a.cmp(&b)));

    let mut curve = PrCurve {
        confidence: Vec::new(),
        recall: Vec::new(),
        precision: Vec::new(),
        interpolated: vec![0.0; RECALL_GRID_POINTS],
    };
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &i in &order {
        let (conf, label) = records[i];
        match label {
            MatchLabel::TruePositive => tp += 1,
            MatchLabel::FalsePositive => fp += 1,
            MatchLabel::Ignored => continue,
        }
        curve.confidence.push(conf);
        curve.recall.push(if gt_count > 0 { tp as f64 / gt_count as f64 } else { 0.0 });
        curve.precision.push(tp as f64 / (tp + fp) as f64);
    }

    // Max precision at or beyond each recall level, swept from the right.
    let mut running_max = 0.0f64;
    let mut point = curve.recall.len();
    for g in (0..RECALL_GRID_POINTS).rev() {
        let r = g as f64 / (RECALL_GRID_POINTS - 1) as f64;
        while point > 0 && curve.recall[point - 1] >= r - 1e-12 {
            point -= 1;
            running_max = running_max.max(curve.precision[point]);
        }
        curve.interpolated[g] = running_max;
    }
    curve
}

/// 101-point interpolated average precision.
///
/// `None` means the value is undefined and excluded from class means:
/// no targets and nothing scoreable detected. With targets present the AP
/// of an empty detection list is 0, and scoreable detections against zero
/// targets also score 0.
pub fn average_precision(records: &[(f64, MatchLabel)], gt_count: usize) -> Option<f64> {
    let scoreable = records.iter().any(|(_, l)| *l != MatchLabel::Ignored);
    if gt_count == 0 {
        return if scoreable { Some(0.0) } else { None };
    }
    let curve = pr_curve(records, gt_count);
    Some(curve.interpolated.iter().sum::<f64>() / RECALL_GRID_POINTS as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// IoU thresholds averaged into map5095; the COCO ladder by default.
    pub iou_thresholds: Vec<f64>,
    /// Per-image cap on detections, most confident first (COCO uses 100).
    pub max_dets_per_image: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            max_dets_per_image: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::config("eval needs at least one IoU threshold"));
        }
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::config("eval IoU thresholds must be in (0,1)"));
        }
        if self.max_dets_per_image == 0 {
            return Err(Error::config("max_dets_per_image must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub ap50: f64,
    pub ap5095: f64,
    pub gt_count: usize,
}

/// The headline metric quadruple plus the per-class breakdown.
///
/// `precision` and `recall` are reported at the confidence threshold that
/// maximizes F1 at IoU 0.5, pooled over classes; mAPs average per-class
/// APs over classes that have at least one ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map5095: f64,
    pub per_class: BTreeMap<u32, ClassEval>,
}

impl EvalResult {
    pub fn zeros() -> EvalResult {
        EvalResult {
            precision: 0.0,
            recall: 0.0,
            map50: 0.0,
            map5095: 0.0,
            per_class: BTreeMap::new(),
        }
    }
}

/// Evaluate detections against ground truth over a whole dataset.
///
/// `dets` holds at most one set per image; every set must reference an
/// image present in `gts` and classes below `num_classes`.
pub fn evaluate(
    dets: &[DetectionSet],
    gts: &[GroundTruthSet],
    num_classes: u32,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    cfg.validate()?;
    let mut gt_by_image: BTreeMap<u64, &GroundTruthSet> = BTreeMap::new();
    for gt in gts {
        if gt_by_image.insert(gt.image_id, gt).is_some() {
            return Err(Error::data(format!("duplicate ground truth for image {}", gt.image_id)));
        }
        if let Some(bad) = gt.boxes.iter().find(|b| b.class_id >= num_classes) {
            return Err(Error::data(format!(
                "ground truth class {} out of range ({num_classes} classes)",
                bad.class_id
            )));
        }
    }

    let mut det_by_image: BTreeMap<u64, DetectionSet> = BTreeMap::new();
    for set in dets {
        if !gt_by_image.contains_key(&set.image_id) {
            return Err(Error::data(format!(
                "detections reference unknown image {}",
                set.image_id
            )));
        }
        if let Some(bad) = set.detections.iter().find(|d| d.class_id >= num_classes) {
            return Err(Error::data(format!(
                "detection class {} out of range ({num_classes} classes)",
                bad.class_id
            )));
        }
        let mut capped = set.clone();
        if capped.detections.len() > cfg.max_dets_per_image {
            let mut order: Vec<usize> = (0..capped.detections.len()).collect();
            order.sort_by(|&a, &b| {
                capped.detections[b]
                    .confidence
                    .total_cmp(&capped.detections[a].confidence)
                    .then_with(|| a.cmp(&b))
            });
            order.truncate(cfg.max_dets_per_image);
            order.sort_unstable();
            capped.detections = order.iter().map(|&i| capped.detections[i].clone()).collect();
        }
        if det_by_image.insert(set.image_id, capped).is_some() {
            return Err(Error::data(format!(
                "multiple detection sets for image {}",
                set.image_id
            )));
        }
    }

    // Match once per (image, class, threshold) and pool records per class.
    let mut thresholds = cfg.iou_thresholds.clone();
    let has_half = thresholds.iter().any(|t| (t - 0.5).abs() < 1e-9);
    if !has_half {
        thresholds.push(0.5);
    }

    let mut gt_counts = vec![0usize; num_classes as usize];
    for gt in gt_by_image.values() {
        for b in &gt.boxes {
            if !b.iscrowd && area(&b.bbox) > 0.0 {
                gt_counts[b.class_id as usize] += 1;
            }
        }
    }

    // records[class][threshold] -> (confidence, label), pooled in image order
    let n_thr = thresholds.len();
    let mut records: Vec<Vec<Vec<(f64, MatchLabel)>>> =
        vec![vec![Vec::new(); n_thr]; num_classes as usize];
    for (&image_id, gt) in &gt_by_image {
        let Some(set) = det_by_image.get(&image_id) else { continue };
        for (ti, &thr) in thresholds.iter().enumerate() {
            let labels = match_detections(set, gt, thr)?;
            for (det, &label) in set.detections.iter().zip(&labels) {
                records[det.class_id as usize][ti].push((det.confidence, label));
            }
        }
    }

    let half_idx = thresholds.iter().position(|t| (t - 0.5).abs() < 1e-9).unwrap();
    let coco_indices: Vec<usize> = (0..cfg.iou_thresholds.len()).collect();

    let mut per_class = BTreeMap::new();
    let mut map50_sum = 0.0;
    let mut map5095_sum = 0.0;
    let mut counted = 0usize;
    for class in 0..num_classes as usize {
        let gt_count = gt_counts[class];
        if gt_count == 0 {
            continue;
        }
        let ap50 = average_precision(&records[class][half_idx], gt_count).unwrap_or(0.0);
        let mut sum = 0.0;
        for &ti in &coco_indices {
            sum += average_precision(&records[class][ti], gt_count).unwrap_or(0.0);
        }
        let ap5095 = sum / coco_indices.len() as f64;
        per_class.insert(class as u32, ClassEval { ap50, ap5095, gt_count });
        map50_sum += ap50;
        map5095_sum += ap5095;
        counted += 1;
    }
    let (map50, map5095) = if counted > 0 {
        (map50_sum / counted as f64, map5095_sum / counted as f64)
    } else {
        (0.0, 0.0)
    };

    // Operating point: max-F1 sweep over pooled records at IoU 0.5.
    let mut pooled: Vec<(f64, MatchLabel)> = Vec::new();
    for class_records in &records {
        pooled.extend_from_slice(&class_records[half_idx]);
    }
    let total_gt: usize = gt_counts.iter().sum();
    let (precision, recall) = max_f1_operating_point(&mut pooled, total_gt);

    Ok(EvalResult { precision, recall, map50, map5095, per_class })
}

/// Sweep confidence cutoffs over ranked records and return (precision,
/// recall) where F1 peaks; ties resolve to the highest cutoff.
fn max_f1_operating_point(records: &mut [(f64, MatchLabel)], total_gt: usize) -> (f64, f64) {
    records.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut best = (0.0f64, 0.0f64, 0.0f64); // (f1, precision, recall)
    for &(_, label) in records.iter() {
        match label {
            MatchLabel::TruePositive => tp += 1,
            MatchLabel::FalsePositive => fp += 1,
            MatchLabel::Ignored => continue,
        }
        if total_gt == 0 {
            continue;
        }
        let p = tp as f64 / (tp + fp) as f64;
        let r = tp as f64 / total_gt as f64;
        if p + r > 0.0 {
            let f1 = 2.0 * p * r / (p + r);
            if f1 > best.0 {
                best = (f1, p, r);
            }
        }
    }
    (best.1, best.2)
}

/// Peak signal-to-noise ratio in decibels for unit-range images,
/// `10 log10(1 / MSE)`, capped at 99 dB for (near-)identical inputs.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid_argument("psnr requires images of identical shape"));
    }
    let n = a.pixels().len() as f64;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse <= 0.0 {
        return Ok(99.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(99.0))
}
