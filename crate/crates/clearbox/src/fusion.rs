//! Detection ensembling across restored image variants.
//!
//! [`wbf`] implements Weighted Boxes Fusion: same-class boxes from all
//! sources are clustered greedily by IoU against the running fused box,
//! and each cluster is replaced by the confidence-weighted average of its
//! members. [`nms`] is the classical suppression baseline for comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{area, iou_raw, BBox, CoordSpace};

/// One scored, class-labelled box from a single source (one purifier
/// variant's detector output). Boxes are normalized and non-degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub confidence: f64,
    /// Identifier of the detection set this came from.
    pub source_id: u32,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: u32, confidence: f64, source_id: u32) -> Result<Detection> {
        if bbox.coord_space != CoordSpace::Normalized {
            return Err(Error::invalid_argument("detections use normalized boxes"));
        }
        if !(0.0..=1.0).contains(&confidence) || !confidence.is_finite() {
            return Err(Error::invalid_argument(format!(
                "confidence must be in [0,1], got {confidence}"
            )));
        }
        if area(&bbox) <= 0.0 {
            return Err(Error::invalid_argument("detection box must have positive area"));
        }
        Ok(Detection { bbox, class_id, confidence, source_id })
    }
}

/// All detections one source produced for one image, with the source's
/// ensemble weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub image_id: u64,
    pub detections: Vec<Detection>,
    pub weight: f64,
}

impl DetectionSet {
    pub fn new(image_id: u64, detections: Vec<Detection>, weight: f64) -> Result<DetectionSet> {
        if weight.is_nan() || weight <= 0.0 || weight.is_infinite() {
            return Err(Error::invalid_argument(format!(
                "detection set weight must be positive, got {weight}"
            )));
        }
        Ok(DetectionSet { image_id, detections, weight })
    }
}

/// How fused confidences are rescaled by cluster support, where `T` is the
/// number of boxes in a cluster and `N` the number of input sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    /// `c * min(T, N) / N`; clusters fed by every model keep their score.
    #[default]
    MinClusterOverModels,
    /// `c * T / N`; can exceed the mean when one model fires repeatedly.
    ClusterOverModels,
    /// Leave the cluster-mean confidence untouched.
    None,
}

/// Rule for ordering detections whose adjusted confidences are exactly
/// equal. A named rule keeps runs reproducible across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Stable by (source_id, index within the source's detection list).
    #[default]
    SourceIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Boxes join a cluster when IoU with its fused box exceeds this.
    pub iou_threshold: f64,
    /// Weight-adjusted confidences below this are dropped up front.
    pub skip_confidence: f64,
    pub rescale_mode: RescaleMode,
    pub tie_break: TieBreak,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            iou_threshold: 0.55,
            skip_confidence: 0.0,
            rescale_mode: RescaleMode::MinClusterOverModels,
            tie_break: TieBreak::SourceIndex,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::config(format!(
                "fusion iou_threshold must be in (0,1), got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.skip_confidence) {
            return Err(Error::config(format!(
                "fusion skip_confidence must be in [0,1), got {}",
                self.skip_confidence
            )));
        }
        Ok(())
    }
}

/// One fused cluster: which input boxes it absorbed and what it fused to.
#[derive(Debug, Clone)]
pub struct WbfCluster {
    pub class_id: u32,
    /// Members as (input set index, index within that set), in the order
    /// they joined the cluster.
    pub members: Vec<(usize, usize)>,
    pub fused: Detection,
}

#[derive(Debug, Clone)]
pub struct WbfOutcome {
    pub fused: DetectionSet,
    pub clusters: Vec<WbfCluster>,
}

#[derive(Debug, Clone, Copy)]
struct Pooled {
    coords: [f64; 4],
    adj_conf: f64,
    class_id: u32,
    set_idx: usize,
    det_idx: usize,
    source_id: u32,
}

struct Cluster {
    members: Vec<usize>,
    weighted_coords: [f64; 4],
    conf_sum: f64,
    fused_coords: [f64; 4],
}

impl Cluster {
    fn seed(item_idx: usize, item: &Pooled) -> Cluster {
        let mut weighted_coords = [0.0; 4];
        for (acc, &v) in weighted_coords.iter_mut().zip(&item.coords) {
            *acc = item.adj_conf * v;
        }
        // A one-member cluster keeps the member's exact coordinates;
        // c*x/c is not always x in floating point.
        Cluster {
            members: vec![item_idx],
            weighted_coords,
            conf_sum: item.adj_conf,
            fused_coords: item.coords,
        }
    }

    fn push(&mut self, item_idx: usize, item: &Pooled) {
        self.members.push(item_idx);
        for (acc, &v) in self.weighted_coords.iter_mut().zip(&item.coords) {
            *acc += item.adj_conf * v;
        }
        self.conf_sum += item.adj_conf;
        for (f, &acc) in self.fused_coords.iter_mut().zip(&self.weighted_coords) {
            *f = acc / self.conf_sum;
        }
    }

    fn mean_conf(&self) -> f64 {
        self.conf_sum / self.members.len() as f64
    }
}

fn xyxy_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let ab = BBox { x_min: a[0], y_min: a[1], x_max: a[2], y_max: a[3], coord_space: CoordSpace::Normalized };
    let bb = BBox { x_min: b[0], y_min: b[1], x_max: b[2], y_max: b[3], coord_space: CoordSpace::Normalized };
    iou_raw(&ab, &bb)
}

/// Weighted Boxes Fusion over one image's detection sets.
///
/// Per class: confidences are multiplied by their set's weight (weights
/// re-normalized to sum to the number of sets), low scores are dropped,
/// and the rest are inserted in descending confidence order into the
/// cluster whose current fused box they best overlap (IoU strictly above
/// `iou_threshold`). A cluster's fused coordinates are the
/// confidence-weighted mean of its members, its confidence the plain mean,
/// rescaled at the end by [`RescaleMode`]. The output carries weight 1.
///
/// The greedy pass does not guarantee that the final fused boxes are
/// pairwise below the IoU threshold — clusters drift as members join —
/// so feeding an output back through `wbf` can, rarely, merge further.
pub fn wbf(sets: &[DetectionSet], cfg: &FusionConfig) -> Result<DetectionSet> {
    Ok(wbf_detailed(sets, cfg)?.fused)
}

/// [`wbf`] plus the cluster assignments, for auditing and verification.
pub fn wbf_detailed(sets: &[DetectionSet], cfg: &FusionConfig) -> Result<WbfOutcome> {
    cfg.validate()?;
    let Some(first) = sets.first() else {
        return Err(Error::invalid_argument("wbf needs at least one detection set"));
    };
    let image_id = first.image_id;
    if sets.iter().any(|s| s.image_id != image_id) {
        return Err(Error::invalid_argument("wbf inputs must share one image_id"));
    }
    let n_models = sets.len() as f64;
    if sets.iter().any(|s| s.weight.is_nan() || s.weight <= 0.0) {
        return Err(Error::invalid_argument("set weights must be positive"));
    }
    // Summing in value order keeps the normalization (and so the whole
    // fusion) bit-identical under permutations of the input sets.
    let mut sorted_weights: Vec<f64> = sets.iter().map(|s| s.weight).collect();
    sorted_weights.sort_by(f64::total_cmp);
    let weight_sum: f64 = sorted_weights.iter().sum();
    let weight_norm = n_models / weight_sum;

    let mut pool = Vec::new();
    for (set_idx, set) in sets.iter().enumerate() {
        let w = set.weight * weight_norm;
        for (det_idx, det) in set.detections.iter().enumerate() {
            if det.bbox.coord_space != CoordSpace::Normalized {
                return Err(Error::invalid_argument("wbf operates on normalized boxes"));
            }
            if area(&det.bbox) <= 0.0 {
                continue; // degenerate boxes never reach fusion
            }
            let adj_conf = det.confidence * w;
            if adj_conf < cfg.skip_confidence {
                continue;
            }
            pool.push(Pooled {
                coords: [det.bbox.x_min, det.bbox.y_min, det.bbox.x_max, det.bbox.y_max],
                adj_conf,
                class_id: det.class_id,
                set_idx,
                det_idx,
                source_id: det.source_id,
            });
        }
    }

    let mut class_ids: Vec<u32> = pool.iter().map(|p| p.class_id).collect();
    class_ids.sort_unstable();
    class_ids.dedup();

    let mut clusters_out = Vec::new();
    for class_id in class_ids {
        let mut items: Vec<&Pooled> = pool.iter().filter(|p| p.class_id == class_id).collect();
        // Descending adjusted confidence; TieBreak::SourceIndex for exact
        // ties (set index last, in case source ids collide).
        items.sort_by(|a, b| {
            b.adj_conf
                .total_cmp(&a.adj_conf)
                .then_with(|| a.source_id.cmp(&b.source_id))
                .then_with(|| a.det_idx.cmp(&b.det_idx))
                .then_with(|| a.set_idx.cmp(&b.set_idx))
        });

        let mut clusters: Vec<Cluster> = Vec::new();
        for (item_idx, item) in items.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (ci, cluster) in clusters.iter().enumerate() {
                let overlap = xyxy_iou(&cluster.fused_coords, &item.coords);
                if overlap > cfg.iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                    best = Some((ci, overlap));
                }
            }
            match best {
                Some((ci, _)) => clusters[ci].push(item_idx, item),
                None => clusters.push(Cluster::seed(item_idx, item)),
            }
        }

        for cluster in clusters {
            let t = cluster.members.len() as f64;
            let factor = match cfg.rescale_mode {
                RescaleMode::MinClusterOverModels => t.min(n_models) / n_models,
                RescaleMode::ClusterOverModels => t / n_models,
                RescaleMode::None => 1.0,
            };
            let confidence = (cluster.mean_conf() * factor).clamp(0.0, 1.0);
            let seed = items[cluster.members[0]];
            let [x1, y1, x2, y2] = cluster.fused_coords;
            let fused = Detection::new(
                BBox::new(x1, y1, x2, y2, CoordSpace::Normalized)?,
                class_id,
                confidence,
                seed.source_id,
            )?;
            clusters_out.push(WbfCluster {
                class_id,
                members: cluster.members.iter().map(|&i| (items[i].set_idx, items[i].det_idx)).collect(),
                fused,
            });
        }
    }

    // Highest confidence first; equal scores fall back to the seed's
    // identity so the order is reproducible.
    clusters_out.sort_by(|a, b| {
        b.fused
            .confidence
            .total_cmp(&a.fused.confidence)
            .then_with(|| a.class_id.cmp(&b.class_id))
            .then_with(|| a.members[0].cmp(&b.members[0]))
    });

    let fused = DetectionSet {
        image_id,
        detections: clusters_out.iter().map(|c| c.fused.clone()).collect(),
        weight: 1.0,
    };
    Ok(WbfOutcome { fused, clusters: clusters_out })
}

/// Greedy per-class non-maximum suppression: keep the most confident box,
/// discard same-class boxes overlapping it above `iou_threshold`, repeat.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then_with(|| dets[a].source_id.cmp(&dets[b].source_id))
            .then_with(|| a.cmp(&b))
    });
    let mut suppressed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(dets[i].clone());
        for &j in &order[rank + 1..] {
            if suppressed[j] || dets[j].class_id != dets[i].class_id {
                continue;
            }
            if iou_raw(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Turn per-denoiser benchmark scores (e.g. PSNR on a denoising set) into
/// ensemble weights proportional to the scores, normalized to mean 1.
pub fn derive_weights(scores: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    if scores.is_empty() {
        return Err(Error::invalid_argument("derive_weights needs at least one score"));
    }
    if scores.values().any(|&s| s.is_nan() || s <= 0.0 || s.is_infinite()) {
        return Err(Error::invalid_argument("benchmark scores must be positive"));
    }
    let total: f64 = scores.values().sum();
    let k = scores.len() as f64;
    Ok(scores
        .iter()
        .map(|(id, &s)| (id.clone(), s * k / total))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, class: u32, conf: f64, source: u32) -> Detection {
        Detection::new(BBox::normalized(x1, y1, x2, y2).unwrap(), class, conf, source).unwrap()
    }

    #[test]
    fn detection_validation() {
        let b = BBox::normalized(0.1, 0.1, 0.4, 0.4).unwrap();
        assert!(Detection::new(b, 0, 1.5, 0).is_err());
        let degenerate = BBox::normalized(0.2, 0.2, 0.2, 0.4).unwrap();
        assert!(Detection::new(degenerate, 0, 0.5, 0).is_err());
        let abs = BBox::new(0.0, 0.0, 5.0, 5.0, CoordSpace::absolute(10.0, 10.0)).unwrap();
        assert!(Detection::new(abs, 0, 0.5, 0).is_err());
    }

    #[test]
    fn single_set_without_overlap_passes_through() {
        let dets = vec![
            det(0.0, 0.0, 0.2, 0.2, 0, 0.5, 0),
            det(0.5, 0.5, 0.7, 0.7, 0, 0.9, 0),
            det(0.0, 0.5, 0.2, 0.7, 1, 0.7, 0),
        ];
        let set = DetectionSet::new(7, dets.clone(), 1.0).unwrap();
        let cfg = FusionConfig { rescale_mode: RescaleMode::None, ..FusionConfig::default() };
        let out = wbf(std::slice::from_ref(&set), &cfg).unwrap();
        assert_eq!(out.image_id, 7);
        assert_eq!(out.weight, 1.0);
        assert_eq!(out.detections.len(), 3);
        // Sorted by confidence descending.
        assert_eq!(out.detections[0], dets[1]);
        assert_eq!(out.detections[1], dets[2]);
        assert_eq!(out.detections[2], dets[0]);
    }

    #[test]
    fn two_box_fusion_matches_hand_computation() {
        // conf 0.9 box (0.10,0.10,0.50,0.50) and conf 0.6 box
        // (0.12,0.12,0.52,0.52): IoU ~ 0.669, one cluster, coordinates
        // (0.9*a + 0.6*b) / 1.5, confidence (0.9+0.6)/2.
        let a = DetectionSet::new(1, vec![det(0.10, 0.10, 0.50, 0.50, 0, 0.9, 0)], 1.0).unwrap();
        let b = DetectionSet::new(1, vec![det(0.12, 0.12, 0.52, 0.52, 0, 0.6, 1)], 1.0).unwrap();
        let out = wbf(&[a, b], &FusionConfig::default()).unwrap();
        assert_eq!(out.detections.len(), 1);
        let fused = &out.detections[0];
        for (got, want) in [
            (fused.bbox.x_min, 0.108),
            (fused.bbox.y_min, 0.108),
            (fused.bbox.x_max, 0.508),
            (fused.bbox.y_max, 0.508),
            (fused.confidence, 0.75),
        ] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn identical_detection_across_three_sets_is_unchanged() {
        let mk = |source| {
            DetectionSet::new(3, vec![det(0.2, 0.3, 0.6, 0.8, 2, 0.85, source)], 1.0).unwrap()
        };
        let out = wbf(&[mk(0), mk(1), mk(2)], &FusionConfig::default()).unwrap();
        assert_eq!(out.detections.len(), 1);
        let fused = &out.detections[0];
        assert!((fused.confidence - 0.85).abs() < 1e-12);
        assert!((fused.bbox.x_min - 0.2).abs() < 1e-12);
        assert!((fused.bbox.y_max - 0.8).abs() < 1e-12);
    }

    #[test]
    fn cluster_membership_is_reported() {
        let a = DetectionSet::new(
            1,
            vec![det(0.1, 0.1, 0.5, 0.5, 0, 0.9, 0), det(0.7, 0.7, 0.9, 0.9, 0, 0.4, 0)],
            1.0,
        )
        .unwrap();
        let b = DetectionSet::new(1, vec![det(0.12, 0.12, 0.52, 0.52, 0, 0.6, 1)], 1.0).unwrap();
        let outcome = wbf_detailed(&[a, b], &FusionConfig::default()).unwrap();
        assert_eq!(outcome.clusters.len(), 2);
        let big = outcome
            .clusters
            .iter()
            .find(|c| c.members.len() == 2)
            .expect("two-member cluster");
        assert_eq!(big.members, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn mismatched_image_ids_are_rejected() {
        let a = DetectionSet::new(1, vec![], 1.0).unwrap();
        let b = DetectionSet::new(2, vec![], 1.0).unwrap();
        assert!(wbf(&[a, b], &FusionConfig::default()).is_err());
        assert!(wbf(&[], &FusionConfig::default()).is_err());
    }

    #[test]
    fn skip_confidence_drops_weak_boxes() {
        let set = DetectionSet::new(
            1,
            vec![det(0.1, 0.1, 0.3, 0.3, 0, 0.9, 0), det(0.6, 0.6, 0.8, 0.8, 0, 0.05, 0)],
            1.0,
        )
        .unwrap();
        let cfg = FusionConfig { skip_confidence: 0.1, ..FusionConfig::default() };
        let out = wbf(std::slice::from_ref(&set), &cfg).unwrap();
        assert_eq!(out.detections.len(), 1);
    }

    #[test]
    fn nms_keeps_disjoint_boxes() {
        let dets = vec![
            det(0.0, 0.0, 0.2, 0.2, 0, 0.9, 0),
            det(0.5, 0.5, 0.7, 0.7, 0, 0.8, 0),
        ];
        assert_eq!(nms(&dets, 0.5).len(), 2);
    }

    #[test]
    fn nms_suppresses_weaker_overlap() {
        // IoU of these two is 0.072 / 0.088 ~ 0.82.
        let hi = det(0.10, 0.10, 0.50, 0.30, 0, 0.9, 0);
        let lo = det(0.10, 0.12, 0.50, 0.32, 0, 0.7, 0);
        let kept = nms(&[lo.clone(), hi.clone()], 0.5);
        assert_eq!(kept, vec![hi]);
    }

    #[test]
    fn nms_is_per_class() {
        let a = det(0.10, 0.10, 0.50, 0.30, 0, 0.9, 0);
        let b = det(0.10, 0.12, 0.50, 0.32, 1, 0.7, 0);
        assert_eq!(nms(&[a, b], 0.5).len(), 2);
    }

    #[test]
    fn derive_weights_examples() {
        let mut scores = BTreeMap::new();
        scores.insert("a".into(), 40.0);
        scores.insert("b".into(), 40.0);
        scores.insert("c".into(), 40.0);
        let w = derive_weights(&scores).unwrap();
        for v in w.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }

        let mut scores = BTreeMap::new();
        scores.insert("a".into(), 40.0);
        scores.insert("b".into(), 39.9);
        scores.insert("c".into(), 40.1);
        let w = derive_weights(&scores).unwrap();
        assert!((w["a"] - 3.0 * 40.0 / 120.0).abs() < 1e-9);
        assert!((w["b"] - 3.0 * 39.9 / 120.0).abs() < 1e-9);
        assert!((w["c"] - 3.0 * 40.1 / 120.0).abs() < 1e-9);

        let mut single = BTreeMap::new();
        single.insert("a".into(), 37.2);
        assert!((derive_weights(&single).unwrap()["a"] - 1.0).abs() < 1e-12);

        let mut bad = BTreeMap::new();
        bad.insert("a".into(), 0.0);
        assert!(derive_weights(&bad).is_err());
    }
}
