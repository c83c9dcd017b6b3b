//! Shared test support: independent brute-force references for WBF and
//! the evaluator, plus random-instance and synthetic-dataset generators.
//!
//! The references re-derive everything from first principles on plain
//! arrays — separate IoU, separate sorting, fused boxes recomputed from
//! scratch after every insertion — so agreement with the library is
//! evidence, not tautology.

#![allow(dead_code, clippy::type_complexity, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clearbox::evaluator::{GroundTruthSet, GtBox};
use clearbox::fusion::{Detection, DetectionSet, FusionConfig, RescaleMode};
use clearbox::geometry::BBox;
use clearbox::image::{test_card, ImageBuffer};
use clearbox::rng::SplitMix64;
use clearbox::{distortion, DistortionKind, DistortionSpec};

// ---------------------------------------------------------------------
// Brute-force Weighted Boxes Fusion reference
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RefDet {
    pub xyxy: [f64; 4],
    pub class: u32,
    pub conf: f64,
    pub source_id: u32,
}

#[derive(Debug, Clone)]
pub struct RefCluster {
    pub class: u32,
    /// (set index, detection index) in join order.
    pub members: Vec<(usize, usize)>,
    pub coords: [f64; 4],
    pub conf: f64,
}

fn ref_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = a[2].min(b[2]) - a[0].max(b[0]);
    let ih = a[3].min(b[3]) - a[1].max(b[1]);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Confidence-weighted mean box of a member list, recomputed from scratch.
fn ref_fused_box(members: &[(usize, usize, f64, [f64; 4])]) -> [f64; 4] {
    let mut acc = [0.0; 4];
    let mut conf_sum = 0.0;
    for (_, _, conf, coords) in members {
        for (a, v) in acc.iter_mut().zip(coords) {
            *a += conf * v;
        }
        conf_sum += conf;
    }
    acc.map(|a| a / conf_sum)
}

/// Exhaustive greedy WBF on plain arrays: per class, walk detections in
/// descending weight-adjusted confidence and join the cluster whose fused
/// box (recomputed from its members each time) overlaps best above the
/// threshold.
pub fn wbf_reference(
    sets: &[(f64, Vec<RefDet>)],
    iou_threshold: f64,
    skip_confidence: f64,
    mode: RescaleMode,
) -> Vec<RefCluster> {
    let n = sets.len() as f64;
    // Value-ordered sum, mirroring the library's permutation-stable
    // normalization.
    let mut weights: Vec<f64> = sets.iter().map(|(w, _)| *w).collect();
    weights.sort_by(f64::total_cmp);
    let weight_sum: f64 = weights.iter().sum();
    let norm = n / weight_sum;

    // (set_idx, det_idx, adjusted conf, coords, class, source_id)
    let mut pool = Vec::new();
    for (set_idx, (w, dets)) in sets.iter().enumerate() {
        for (det_idx, d) in dets.iter().enumerate() {
            let area = (d.xyxy[2] - d.xyxy[0]) * (d.xyxy[3] - d.xyxy[1]);
            if area <= 0.0 {
                continue;
            }
            let adj = d.conf * (w * norm);
            if adj < skip_confidence {
                continue;
            }
            pool.push((set_idx, det_idx, adj, d.xyxy, d.class, d.source_id));
        }
    }

    let mut classes: Vec<u32> = pool.iter().map(|p| p.4).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut out = Vec::new();
    for class in classes {
        let mut items: Vec<&(usize, usize, f64, [f64; 4], u32, u32)> =
            pool.iter().filter(|p| p.4 == class).collect();
        items.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| a.5.cmp(&b.5))
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.0.cmp(&b.0))
        });

        // Clusters as member lists; fused box derived on demand.
        let mut clusters: Vec<Vec<(usize, usize, f64, [f64; 4])>> = Vec::new();
        for item in items {
            let member = (item.0, item.1, item.2, item.3);
            let mut best_iou = iou_threshold;
            let mut best = None;
            for (ci, cluster) in clusters.iter().enumerate() {
                let fused = ref_fused_box(cluster);
                let overlap = ref_iou(&fused, &item.3);
                if overlap > best_iou {
                    best_iou = overlap;
                    best = Some(ci);
                }
            }
            match best {
                Some(ci) => clusters[ci].push(member),
                None => clusters.push(vec![member]),
            }
        }

        for cluster in clusters {
            let t = cluster.len() as f64;
            let factor = match mode {
                RescaleMode::MinClusterOverModels => t.min(n) / n,
                RescaleMode::ClusterOverModels => t / n,
                RescaleMode::None => 1.0,
            };
            let mean: f64 = cluster.iter().map(|m| m.2).sum::<f64>() / t;
            out.push(RefCluster {
                class,
                members: cluster.iter().map(|m| (m.0, m.1)).collect(),
                coords: ref_fused_box(&cluster),
                conf: (mean * factor).clamp(0.0, 1.0),
            });
        }
    }

    // Same output order as the library: confidence, class, seed identity.
    out.sort_by(|a, b| {
        b.conf
            .total_cmp(&a.conf)
            .then_with(|| a.class.cmp(&b.class))
            .then_with(|| a.members[0].cmp(&b.members[0]))
    });
    out
}

/// Random WBF instance: up to `max_sets` sets, at most `max_boxes` boxes
/// in total, classes below `num_classes`.
pub fn random_wbf_instance(
    rng: &mut SplitMix64,
    max_sets: usize,
    max_boxes: usize,
    num_classes: u32,
) -> Vec<(f64, Vec<RefDet>)> {
    let n_sets = 1 + rng.next_below(max_sets as u64) as usize;
    let total = 1 + rng.next_below(max_boxes as u64) as usize;
    let mut sets: Vec<(f64, Vec<RefDet>)> =
        (0..n_sets).map(|_| (rng.next_range(0.25, 2.5), Vec::new())).collect();
    for _ in 0..total {
        let set_idx = rng.next_below(n_sets as u64) as usize;
        // Box shapes biased toward overlap so clustering actually happens.
        let cx = rng.next_range(0.2, 0.8);
        let cy = rng.next_range(0.2, 0.8);
        let w = rng.next_range(0.05, 0.4);
        let h = rng.next_range(0.05, 0.4);
        let det = RefDet {
            xyxy: [
                (cx - w / 2.0).max(0.0),
                (cy - h / 2.0).max(0.0),
                (cx + w / 2.0).min(1.0),
                (cy + h / 2.0).min(1.0),
            ],
            class: rng.next_below(num_classes as u64) as u32,
            conf: rng.next_range(0.05, 1.0),
            source_id: set_idx as u32,
        };
        sets[set_idx].1.push(det);
    }
    sets
}

/// The same instance as library types.
pub fn instance_to_sets(sets: &[(f64, Vec<RefDet>)], image_id: u64) -> Vec<DetectionSet> {
    sets.iter()
        .map(|(w, dets)| {
            let detections = dets
                .iter()
                .map(|d| {
                    Detection::new(
                        BBox::normalized(d.xyxy[0], d.xyxy[1], d.xyxy[2], d.xyxy[3]).unwrap(),
                        d.class,
                        d.conf,
                        d.source_id,
                    )
                    .unwrap()
                })
                .collect();
            DetectionSet::new(image_id, detections, *w).unwrap()
        })
        .collect()
}

/// Assert the library outcome equals the reference: identical cluster
/// assignments, coordinates and confidences within `tol`.
pub fn assert_wbf_matches_reference(
    sets: &[(f64, Vec<RefDet>)],
    cfg: &FusionConfig,
    tol: f64,
    context: &str,
) {
    let lib = clearbox::fusion::wbf_detailed(&instance_to_sets(sets, 1), cfg)
        .unwrap_or_else(|e| panic!("{context}: wbf failed: {e}"));
    let reference = wbf_reference(sets, cfg.iou_threshold, cfg.skip_confidence, cfg.rescale_mode);
    assert_eq!(
        lib.clusters.len(),
        reference.len(),
        "{context}: cluster count {} vs reference {}",
        lib.clusters.len(),
        reference.len()
    );
    for (i, (got, want)) in lib.clusters.iter().zip(&reference).enumerate() {
        assert_eq!(got.class_id, want.class, "{context}: cluster {i} class");
        assert_eq!(got.members, want.members, "{context}: cluster {i} members");
        let got_coords = [
            got.fused.bbox.x_min,
            got.fused.bbox.y_min,
            got.fused.bbox.x_max,
            got.fused.bbox.y_max,
        ];
        for (a, b) in got_coords.iter().zip(&want.coords) {
            assert!((a - b).abs() < tol, "{context}: cluster {i} coords {a} vs {b}");
        }
        assert!(
            (got.fused.confidence - want.conf).abs() < tol,
            "{context}: cluster {i} confidence {} vs {}",
            got.fused.confidence,
            want.conf
        );
    }
}

// ---------------------------------------------------------------------
// Brute-force evaluator reference
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RefEvalDet {
    pub xyxy: [f64; 4],
    pub class: u32,
    pub conf: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RefGt {
    pub xyxy: [f64; 4],
    pub class: u32,
    pub crowd: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefEval {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map5095: f64,
    pub per_class: BTreeMap<u32, (f64, f64, usize)>,
}

#[derive(Clone, Copy, PartialEq)]
enum RefLabel {
    Tp,
    Fp,
    Ign,
}

/// Exhaustive greedy matcher for one image and class at one threshold.
fn ref_match(dets: &[(usize, RefEvalDet)], gts: &[RefGt], thr: f64) -> Vec<(f64, RefLabel)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.conf.total_cmp(&dets[a].1.conf).then_with(|| {
        dets[a].0.cmp(&dets[b].0)
    }));
    let mut taken = vec![false; gts.len()];
    let mut out = vec![(0.0, RefLabel::Fp); dets.len()];
    for &di in &order {
        let d = dets[di].1;
        let mut best: Option<(usize, f64)> = None;
        let mut crowd = false;
        for (gi, g) in gts.iter().enumerate() {
            if g.class != d.class {
                continue;
            }
            let area = (g.xyxy[2] - g.xyxy[0]) * (g.xyxy[3] - g.xyxy[1]);
            if area <= 0.0 {
                continue;
            }
            let overlap = ref_iou(&d.xyxy, &g.xyxy);
            if overlap < thr {
                continue;
            }
            if g.crowd {
                crowd = true;
            } else if !taken[gi] {
                let better = match best {
                    None => true,
                    Some((_, b)) => overlap > b,
                };
                if better {
                    best = Some((gi, overlap));
                }
            }
        }
        out[di] = match best {
            Some((gi, _)) => {
                taken[gi] = true;
                (d.conf, RefLabel::Tp)
            }
            None if crowd => (d.conf, RefLabel::Ign),
            None => (d.conf, RefLabel::Fp),
        };
    }
    out
}

/// Literal 101-point interpolated AP: for every grid recall, scan all PR
/// points for the max precision at or beyond it.
fn ref_ap(mut records: Vec<(usize, f64, RefLabel)>, gt_count: usize) -> Option<f64> {
    let scoreable = records.iter().any(|r| r.2 != RefLabel::Ign);
    if gt_count == 0 {
        return if scoreable { Some(0.0) } else { None };
    }
    records.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    for (_, _, label) in &records {
        match label {
            RefLabel::Tp => tp += 1,
            RefLabel::Fp => fp += 1,
            RefLabel::Ign => continue,
        }
        points.push((tp as f64 / gt_count as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut total = 0.0;
    for g in 0..101 {
        let r = g as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(recall, _)| *recall >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        total += best;
    }
    Some(total / 101.0)
}

/// Full reference evaluation over a small dataset. Detections are given
/// per image in the same order the library receives them.
pub fn evaluate_reference(
    dets: &[(u64, Vec<RefEvalDet>)],
    gts: &[(u64, Vec<RefGt>)],
    num_classes: u32,
    thresholds: &[f64],
) -> RefEval {
    let mut gt_count = vec![0usize; num_classes as usize];
    for (_, boxes) in gts {
        for b in boxes {
            let area = (b.xyxy[2] - b.xyxy[0]) * (b.xyxy[3] - b.xyxy[1]);
            if !b.crowd && area > 0.0 {
                gt_count[b.class as usize] += 1;
            }
        }
    }

    // records[class][threshold] pooled across images in image-id order.
    let mut images: Vec<u64> = gts.iter().map(|(id, _)| *id).collect();
    images.sort_unstable();
    let mut all_thr = thresholds.to_vec();
    if !all_thr.iter().any(|t| (*t - 0.5).abs() < 1e-9) {
        all_thr.push(0.5);
    }
    let half = all_thr.iter().position(|t| (*t - 0.5).abs() < 1e-9).unwrap();

    let mut records: Vec<Vec<Vec<(usize, f64, RefLabel)>>> =
        vec![vec![Vec::new(); all_thr.len()]; num_classes as usize];
    let mut pool_counter = 0usize;
    for image_id in &images {
        let image_dets: &[RefEvalDet] = dets
            .iter()
            .find(|(id, _)| id == image_id)
            .map(|(_, d)| d.as_slice())
            .unwrap_or(&[]);
        let image_gts: &[RefGt] =
            gts.iter().find(|(id, _)| id == image_id).map(|(_, g)| g.as_slice()).unwrap();
        for (ti, &thr) in all_thr.iter().enumerate() {
            for class in 0..num_classes {
                let class_dets: Vec<(usize, RefEvalDet)> = image_dets
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.class == class)
                    .map(|(i, d)| (i, *d))
                    .collect();
                let class_gts: Vec<RefGt> =
                    image_gts.iter().filter(|g| g.class == class).copied().collect();
                let labels = ref_match(&class_dets, &class_gts, thr);
                for (k, (conf, label)) in labels.iter().enumerate() {
                    records[class as usize][ti].push((pool_counter + k, *conf, *label));
                }
            }
        }
        pool_counter += image_dets.len();
    }

    let mut per_class = BTreeMap::new();
    let mut sum50 = 0.0;
    let mut sum5095 = 0.0;
    let mut counted = 0usize;
    for class in 0..num_classes as usize {
        if gt_count[class] == 0 {
            continue;
        }
        let ap50 = ref_ap(records[class][half].clone(), gt_count[class]).unwrap_or(0.0);
        let mut acc = 0.0;
        for ti in 0..thresholds.len() {
            acc += ref_ap(records[class][ti].clone(), gt_count[class]).unwrap_or(0.0);
        }
        let ap5095 = acc / thresholds.len() as f64;
        per_class.insert(class as u32, (ap50, ap5095, gt_count[class]));
        sum50 += ap50;
        sum5095 += ap5095;
        counted += 1;
    }
    let (map50, map5095) = if counted > 0 {
        (sum50 / counted as f64, sum5095 / counted as f64)
    } else {
        (0.0, 0.0)
    };

    // Max-F1 operating point at IoU 0.5, pooled over classes.
    let total_gt: usize = gt_count.iter().sum();
    let mut pooled: Vec<(usize, f64, RefLabel)> = Vec::new();
    for class_records in &records {
        pooled.extend(class_records[half].iter().copied());
    }
    pooled.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut best = (0.0, 0.0, 0.0);
    for (_, _, label) in &pooled {
        match label {
            RefLabel::Tp => tp += 1,
            RefLabel::Fp => fp += 1,
            RefLabel::Ign => continue,
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

    RefEval { precision: best.1, recall: best.2, map50, map5095, per_class }
}

/// Random evaluation instance: `max_images` images, up to `max_boxes`
/// ground-truth boxes and detections per image.
pub fn random_eval_instance(
    rng: &mut SplitMix64,
    max_images: usize,
    max_boxes: usize,
    num_classes: u32,
) -> (Vec<(u64, Vec<RefGt>)>, Vec<(u64, Vec<RefEvalDet>)>) {
    let n_images = 1 + rng.next_below(max_images as u64);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for image_id in 0..n_images {
        let n_gt = rng.next_below(max_boxes as u64 + 1) as usize;
        let mut boxes = Vec::new();
        for _ in 0..n_gt {
            let cx = rng.next_range(0.15, 0.85);
            let cy = rng.next_range(0.15, 0.85);
            let w = rng.next_range(0.08, 0.35);
            let h = rng.next_range(0.08, 0.35);
            boxes.push(RefGt {
                xyxy: [
                    (cx - w / 2.0).max(0.0),
                    (cy - h / 2.0).max(0.0),
                    (cx + w / 2.0).min(1.0),
                    (cy + h / 2.0).min(1.0),
                ],
                class: rng.next_below(num_classes as u64) as u32,
                crowd: rng.next_f64() < 0.1,
            });
        }
        // Detections: jittered copies of ground truth plus a few strays.
        let mut image_dets = Vec::new();
        for g in &boxes {
            if rng.next_f64() < 0.75 {
                let jitter = 0.04;
                image_dets.push(RefEvalDet {
                    xyxy: [
                        (g.xyxy[0] + jitter * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                        (g.xyxy[1] + jitter * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                        (g.xyxy[2] + jitter * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                        (g.xyxy[3] + jitter * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                    ],
                    class: g.class,
                    conf: rng.next_range(0.05, 1.0),
                });
            }
        }
        let strays = rng.next_below(max_boxes as u64 / 2 + 1) as usize;
        for _ in 0..strays {
            let x = rng.next_range(0.0, 0.7);
            let y = rng.next_range(0.0, 0.7);
            image_dets.push(RefEvalDet {
                xyxy: [x, y, x + rng.next_range(0.05, 0.3), y + rng.next_range(0.05, 0.3)],
                class: rng.next_below(num_classes as u64) as u32,
                conf: rng.next_range(0.05, 1.0),
            });
        }
        image_dets.retain(|d| (d.xyxy[2] - d.xyxy[0]) > 1e-6 && (d.xyxy[3] - d.xyxy[1]) > 1e-6);
        gts.push((image_id, boxes));
        dets.push((image_id, image_dets));
    }
    (gts, dets)
}

/// The same instance as library types.
pub fn eval_instance_to_lib(
    gts: &[(u64, Vec<RefGt>)],
    dets: &[(u64, Vec<RefEvalDet>)],
) -> (Vec<GroundTruthSet>, Vec<DetectionSet>) {
    let gt_sets = gts
        .iter()
        .map(|(image_id, boxes)| GroundTruthSet {
            image_id: *image_id,
            boxes: boxes
                .iter()
                .map(|g| GtBox {
                    bbox: BBox::normalized(g.xyxy[0], g.xyxy[1], g.xyxy[2], g.xyxy[3]).unwrap(),
                    class_id: g.class,
                    iscrowd: g.crowd,
                })
                .collect(),
        })
        .collect();
    let det_sets = dets
        .iter()
        .map(|(image_id, list)| {
            DetectionSet::new(
                *image_id,
                list.iter()
                    .map(|d| {
                        Detection::new(
                            BBox::normalized(d.xyxy[0], d.xyxy[1], d.xyxy[2], d.xyxy[3]).unwrap(),
                            d.class,
                            d.conf,
                            0,
                        )
                        .unwrap()
                    })
                    .collect(),
                1.0,
            )
            .unwrap()
        })
        .collect();
    (gt_sets, det_sets)
}

// ---------------------------------------------------------------------
// Synthetic on-disk datasets for orchestrator-level tests
// ---------------------------------------------------------------------

/// A synthetic COCO dataset on disk: distorted test cards plus random
/// ground truth over `num_classes` classes. Returns (images_dir,
/// annotations_path).
pub fn write_synthetic_dataset(
    dir: &Path,
    num_images: usize,
    size: usize,
    num_classes: u32,
    seed: u64,
) -> (PathBuf, PathBuf) {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).unwrap();
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut ann_id = 1u64;
    for i in 0..num_images {
        let image_id = (i + 1) as u64;
        let mut rng = SplitMix64::for_stream(seed, image_id, "dataset");
        let base = test_card(size, size, 3).unwrap();
        let img = degrade(&base, &mut rng, seed ^ image_id);
        let file_name = format!("img{i:03}.png");
        clearbox::image::io::write_png(&img, &images_dir.join(&file_name)).unwrap();
        images.push(serde_json::json!({
            "id": image_id,
            "width": size,
            "height": size,
            "file_name": file_name,
        }));

        let n_boxes = 2 + rng.next_below(3);
        for _ in 0..n_boxes {
            let cx = rng.next_range(0.2, 0.8) * size as f64;
            let cy = rng.next_range(0.2, 0.8) * size as f64;
            let w = rng.next_range(0.15, 0.4) * size as f64;
            let h = rng.next_range(0.15, 0.4) * size as f64;
            let x = (cx - w / 2.0).max(0.0);
            let y = (cy - h / 2.0).max(0.0);
            annotations.push(serde_json::json!({
                "id": ann_id,
                "image_id": image_id,
                "category_id": 1 + rng.next_below(num_classes as u64),
                "bbox": [x, y, w.min(size as f64 - x), h.min(size as f64 - y)],
                "iscrowd": 0,
            }));
            ann_id += 1;
        }
    }
    let categories: Vec<serde_json::Value> = (0..num_classes)
        .map(|c| serde_json::json!({"id": c + 1, "name": format!("class{c}")}))
        .collect();
    let doc = serde_json::json!({
        "images": images,
        "annotations": annotations,
        "categories": categories,
    });
    let annotations_path = dir.join("annotations.json");
    std::fs::write(&annotations_path, serde_json::to_vec_pretty(&doc).unwrap()).unwrap();
    (images_dir, annotations_path)
}

fn degrade(img: &ImageBuffer, rng: &mut SplitMix64, seed: u64) -> ImageBuffer {
    let blurred = distortion::distort(
        img,
        &DistortionSpec {
            kind: DistortionKind::MotionBlur {
                length: 5 + 2 * rng.next_below(3) as usize,
                angle_degrees: rng.next_range(0.0, 180.0),
            },
            seed,
        },
    )
    .unwrap();
    distortion::distort(
        &blurred,
        &DistortionSpec { kind: DistortionKind::GaussianNoise { sigma: 0.04 }, seed },
    )
    .unwrap()
}
