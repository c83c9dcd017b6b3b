//! Synthetic workload builders shared by the benchmark targets.

use clearbox::evaluator::{GroundTruthSet, GtBox};
use clearbox::fusion::{Detection, DetectionSet};
use clearbox::geometry::BBox;
use clearbox::rng::SplitMix64;

/// Overlap-heavy detection sets for one image, as a detector ensemble
/// would produce: `n_sets` sources, each covering most of `n_objects`
/// targets with jittered boxes plus some stray false positives.
pub fn synth_detection_sets(n_sets: usize, n_objects: usize, seed: u64) -> Vec<DetectionSet> {
    let mut rng = SplitMix64::new(seed);
    let objects: Vec<([f64; 4], u32)> = (0..n_objects)
        .map(|_| {
            let cx = rng.next_range(0.15, 0.85);
            let cy = rng.next_range(0.15, 0.85);
            let w = rng.next_range(0.05, 0.25);
            let h = rng.next_range(0.05, 0.25);
            (
                [
                    (cx - w / 2.0).max(0.0),
                    (cy - h / 2.0).max(0.0),
                    (cx + w / 2.0).min(1.0),
                    (cy + h / 2.0).min(1.0),
                ],
                rng.next_below(8) as u32,
            )
        })
        .collect();

    (0..n_sets)
        .map(|set_idx| {
            let mut detections = Vec::new();
            for (coords, class) in &objects {
                if rng.next_f64() < 0.1 {
                    continue;
                }
                let j = 0.01;
                let bbox = BBox::normalized(
                    (coords[0] + j * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                    (coords[1] + j * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                    (coords[2] + j * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                    (coords[3] + j * (rng.next_f64() - 0.5)).clamp(0.0, 1.0),
                )
                .unwrap();
                detections
                    .push(Detection::new(bbox, *class, rng.next_range(0.2, 1.0), set_idx as u32).unwrap());
            }
            DetectionSet::new(1, detections, 1.0).unwrap()
        })
        .collect()
}

/// Matching ground truth and detections for `n_images` images.
pub fn synth_eval_data(
    n_images: usize,
    boxes_per_image: usize,
    seed: u64,
) -> (Vec<GroundTruthSet>, Vec<DetectionSet>) {
    let mut rng = SplitMix64::new(seed);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for image_id in 1..=n_images as u64 {
        let mut boxes = Vec::new();
        let mut detections = Vec::new();
        for _ in 0..boxes_per_image {
            let cx = rng.next_range(0.15, 0.85);
            let cy = rng.next_range(0.15, 0.85);
            let w = rng.next_range(0.08, 0.3);
            let h = rng.next_range(0.08, 0.3);
            let bbox = BBox::normalized(
                (cx - w / 2.0).max(0.0),
                (cy - h / 2.0).max(0.0),
                (cx + w / 2.0).min(1.0),
                (cy + h / 2.0).min(1.0),
            )
            .unwrap();
            let class_id = rng.next_below(8) as u32;
            boxes.push(GtBox { bbox, class_id, iscrowd: false });
            if rng.next_f64() < 0.85 {
                detections.push(
                    Detection::new(bbox, class_id, rng.next_range(0.2, 1.0), 0).unwrap(),
                );
            }
        }
        gts.push(GroundTruthSet { image_id, boxes });
        dets.push(DetectionSet::new(image_id, detections, 1.0).unwrap());
    }
    (gts, dets)
}
