//! The experiment driver: purify each variant, obtain detections, fuse,
//! evaluate, persist — deterministically for a given config and seed.

pub mod ablate;
pub mod config;
pub mod overlay;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;

pub use ablate::{ablate_components, ablate_orderings, AblationReport, AblationRow, ComponentToggle};
pub use config::{
    DatasetConfig, DetectorConfig, FusionMethod, FusionSettings, PipelineConfig, VariantConfig,
    WeightSpec,
};
pub use overlay::render_overlays;

use crate::coco::{self, CocoDataset, DetectionRecord};
use crate::distortion::{oracle_detect, OracleSpec};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, match_detections, pr_curve, EvalResult, PrCurve};
use crate::fusion::{nms, wbf, DetectionSet};
use crate::image::io::{read_image, write_png};
use crate::image::ImageBuffer;
use crate::purifier::run_pipeline;
use crate::util::write_atomic;

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub result: EvalResult,
    pub per_variant: BTreeMap<String, EvalResult>,
    /// One fused detection set per image, ordered by image id.
    pub fused: Vec<DetectionSet>,
    /// Each variant's raw detections, keyed by variant id, ordered by
    /// image id; persisted so ablation rows stay auditable.
    pub variant_sets: BTreeMap<String, Vec<DetectionSet>>,
}

struct PerImage {
    fused: DetectionSet,
    per_variant: Vec<DetectionSet>,
}

/// Run the full experiment described by `cfg` and persist its artifacts
/// under `cfg.output_dir`:
///
/// ```text
/// purified/<variant>/<image>.png     restored images (when stages exist)
/// detections/<variant>.json          per-variant COCO results
/// detections/fused.json              fused COCO results
/// metrics/result.json|csv|txt        headline metrics
/// metrics/per_variant.json           per-variant metrics
/// metrics/pr_curve_iou50.json        fused PR curve at IoU 0.5
/// ```
pub fn run_experiment(cfg: &PipelineConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dataset = coco::load_annotations(&cfg.dataset.annotations)?;
    let output = run_loaded(cfg, &dataset)?;
    persist_outputs(cfg, &dataset, &output)?;
    Ok(output)
}

/// The compute half of [`run_experiment`]; writes purified images but no
/// metric or detection files.
fn run_loaded(cfg: &PipelineConfig, dataset: &CocoDataset) -> Result<ExperimentOutput> {
    let weights = cfg.resolve_weights()?;
    // The experiment seed folds into the oracle's own stream seed.
    let oracle = match &cfg.detector {
        DetectorConfig::Oracle(spec) => Some(OracleSpec { seed: spec.seed ^ cfg.seed, ..spec.clone() }),
        _ => None,
    };
    let file_sets = preload_detection_files(cfg, dataset, &weights)?;

    crate::util::set_external_process_limit(cfg.max_external_procs.unwrap_or(0));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;

    let per_image: Vec<Result<PerImage>> = pool.install(|| {
        dataset
            .images
            .par_iter()
            .map(|image| process_image(cfg, dataset, image.id, &weights, oracle.as_ref(), file_sets.as_ref()))
            .collect()
    });
    // Surface failures in image order, independent of scheduling.
    let per_image: Vec<PerImage> = per_image.into_iter().collect::<Result<_>>()?;

    let fused: Vec<DetectionSet> = per_image.iter().map(|p| p.fused.clone()).collect();
    let result = evaluate(&fused, &dataset.ground_truth, dataset.num_classes(), &cfg.eval)?;

    let mut per_variant = BTreeMap::new();
    let mut variant_sets = BTreeMap::new();
    for (vi, variant) in cfg.variants.iter().enumerate() {
        let sets: Vec<DetectionSet> =
            per_image.iter().map(|p| p.per_variant[vi].clone()).collect();
        let metrics = evaluate(&sets, &dataset.ground_truth, dataset.num_classes(), &cfg.eval)?;
        per_variant.insert(variant.id.clone(), metrics);
        variant_sets.insert(variant.id.clone(), sets);
    }

    Ok(ExperimentOutput { result, per_variant, fused, variant_sets })
}

fn preload_detection_files(
    cfg: &PipelineConfig,
    dataset: &CocoDataset,
    weights: &BTreeMap<String, f64>,
) -> Result<Option<BTreeMap<String, BTreeMap<u64, DetectionSet>>>> {
    let DetectorConfig::DetectionFiles { files } = &cfg.detector else {
        return Ok(None);
    };
    let mut out = BTreeMap::new();
    for (vi, variant) in cfg.variants.iter().enumerate() {
        let path = &files[&variant.id];
        let records = coco::read_detection_records(path)?;
        let sets = coco::records_to_sets(&records, dataset, vi as u32, weights[&variant.id])
            .map_err(|e| e.in_context(format!("variant {:?}", variant.id)))?;
        out.insert(
            variant.id.clone(),
            sets.into_iter().map(|s| (s.image_id, s)).collect(),
        );
    }
    Ok(Some(out))
}

fn process_image(
    cfg: &PipelineConfig,
    dataset: &CocoDataset,
    image_id: u64,
    weights: &BTreeMap<String, f64>,
    oracle: Option<&OracleSpec>,
    file_sets: Option<&BTreeMap<String, BTreeMap<u64, DetectionSet>>>,
) -> Result<PerImage> {
    let image = dataset.image(image_id).expect("iterating dataset images");
    let gt = dataset.ground_truth_for(image_id).expect("load_annotations covers every image");

    let needs_pixels = matches!(cfg.detector, DetectorConfig::ExternalCommand { .. })
        || cfg.variants.iter().any(|v| !v.stages.is_empty());
    let pixels: Option<ImageBuffer> = if needs_pixels {
        let path = cfg.dataset.images_dir.join(&image.file_name);
        Some(
            read_image(&path)
                .map_err(|e| e.in_context(format!("image {image_id}")))?,
        )
    } else {
        None
    };

    let mut per_variant = Vec::with_capacity(cfg.variants.len());
    for (vi, variant) in cfg.variants.iter().enumerate() {
        let context = || format!("image {image_id} variant {:?}", variant.id);

        let purified: Option<ImageBuffer> = if variant.stages.is_empty() {
            None
        } else {
            let restored = run_pipeline(pixels.as_ref().expect("pixels loaded"), &variant.stages)
                .map_err(|e| e.in_context(context()))?;
            let out_path = purified_path(&cfg.output_dir, &variant.id, &image.file_name);
            write_png(&restored, &out_path).map_err(|e| e.in_context(context()))?;
            Some(restored)
        };

        let mut set = match &cfg.detector {
            DetectorConfig::Oracle(_) => {
                let spec = oracle.expect("oracle preresolved");
                oracle_detect(gt, &variant.id, vi as u32, cfg.oracle_quality(variant), spec)
                    .map_err(|e| e.in_context(context()))?
            }
            DetectorConfig::DetectionFiles { .. } => file_sets
                .expect("files preloaded")
                .get(&variant.id)
                .and_then(|m| m.get(&image_id))
                .cloned()
                .unwrap_or(DetectionSet { image_id, detections: Vec::new(), weight: 1.0 }),
            DetectorConfig::ExternalCommand { command, timeout_secs } => {
                let input = purified.as_ref().or(pixels.as_ref()).expect("pixels loaded");
                run_external_detector(
                    input,
                    image_id,
                    image.width,
                    image.height,
                    dataset,
                    vi as u32,
                    command,
                    *timeout_secs,
                    cfg.large_size,
                )
                .map_err(|e| e.in_context(context()))?
            }
        };
        set.weight = weights[&variant.id];
        per_variant.push(set);
    }

    let fused = match cfg.fusion.method {
        FusionMethod::Wbf => wbf(&per_variant, &cfg.fusion.config)
            .map_err(|e| e.in_context(format!("image {image_id}")))?,
        FusionMethod::Nms => {
            let pooled: Vec<_> =
                per_variant.iter().flat_map(|s| s.detections.iter().cloned()).collect();
            DetectionSet {
                image_id,
                detections: nms(&pooled, cfg.fusion.config.iou_threshold),
                weight: 1.0,
            }
        }
    };
    Ok(PerImage { fused, per_variant })
}

fn purified_path(output_dir: &Path, variant_id: &str, file_name: &str) -> PathBuf {
    let stem = Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string());
    output_dir
        .join("purified")
        .join(variant_id)
        .join(format!("{stem}.png"))
}

/// Hand one purified image to the detector command; `{input}` is a PNG,
/// `{output}` must come back as a COCO detection-results JSON.
#[allow(clippy::too_many_arguments)]
fn run_external_detector(
    img: &ImageBuffer,
    image_id: u64,
    width: u32,
    height: u32,
    dataset: &CocoDataset,
    source_id: u32,
    command: &str,
    timeout_secs: u64,
    large_size: bool,
) -> Result<DetectionSet> {
    let dir = tempfile::Builder::new().prefix("clearbox-detect-").tempdir()?;
    let input = dir.path().join("input.png");
    let output = dir.path().join("detections.json");
    write_png(img, &input)?;
    let cmd = command
        .replace("{input}", &input.display().to_string())
        .replace("{output}", &output.display().to_string());
    let mut env = Vec::new();
    if large_size {
        env.push(("CLEARBOX_LARGE_SIZE", "1"));
    }
    crate::util::run_shell_with_timeout(&cmd, Duration::from_secs(timeout_secs), &env)?;
    if !output.exists() {
        return Err(Error::External(format!("detector produced no output file: {cmd}")));
    }
    let records = coco::read_detection_records(&output)?;

    let mut detections = Vec::new();
    for rec in &records {
        if rec.image_id != image_id && rec.image_id != 0 {
            return Err(Error::data(format!(
                "detector returned records for image {} while processing image {image_id}",
                rec.image_id
            )));
        }
        let class_id = dataset.categories.class_of(rec.category_id).ok_or_else(|| {
            Error::data(format!("detector returned unknown category {}", rec.category_id))
        })?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(Error::data(format!("detector score {} out of [0,1]", rec.score)));
        }
        if let Some(bbox) = coco::normalized_from_xywh(rec.bbox, width, height)? {
            detections.push(crate::fusion::Detection::new(bbox, class_id, rec.score, source_id)?);
        }
    }
    DetectionSet::new(image_id, detections, 1.0)
}

fn persist_outputs(
    cfg: &PipelineConfig,
    dataset: &CocoDataset,
    output: &ExperimentOutput,
) -> Result<()> {
    let detections_dir = cfg.output_dir.join("detections");
    let metrics_dir = cfg.output_dir.join("metrics");

    let fused_records = coco::sets_to_records(&output.fused, dataset)?;
    coco::write_detection_records(&fused_records, &detections_dir.join("fused.json"))?;

    for (variant_id, sets) in &output.variant_sets {
        let records = coco::sets_to_records(sets, dataset)?;
        coco::write_detection_records(&records, &detections_dir.join(format!("{variant_id}.json")))?;
    }

    write_atomic(
        &metrics_dir.join("result.json"),
        &serde_json::to_vec_pretty(&output.result)?,
    )?;
    write_atomic(
        &metrics_dir.join("per_variant.json"),
        &serde_json::to_vec_pretty(&output.per_variant)?,
    )?;

    let mut rows: Vec<(String, &EvalResult)> = vec![("fused".to_string(), &output.result)];
    for (id, metrics) in &output.per_variant {
        rows.push((format!("variant {id}"), metrics));
    }
    write_atomic(&metrics_dir.join("result.txt"), report::metrics_table(&rows).as_bytes())?;
    write_atomic(&metrics_dir.join("result.csv"), report::metrics_csv(&rows).as_bytes())?;

    let curve = fused_pr_curve(&output.fused, dataset)?;
    write_atomic(
        &metrics_dir.join("pr_curve_iou50.json"),
        &serde_json::to_vec_pretty(&curve)?,
    )?;
    Ok(())
}

/// PR curve of the fused detections at IoU 0.5, pooled over classes.
pub fn fused_pr_curve(fused: &[DetectionSet], dataset: &CocoDataset) -> Result<PrCurve> {
    let mut records = Vec::new();
    for set in fused {
        let gt = dataset
            .ground_truth_for(set.image_id)
            .ok_or_else(|| Error::data(format!("unknown image {}", set.image_id)))?;
        let labels = match_detections(set, gt, 0.5)?;
        for (det, &label) in set.detections.iter().zip(&labels) {
            records.push((det.confidence, label));
        }
    }
    let gt_count = dataset
        .ground_truth
        .iter()
        .flat_map(|gt| gt.boxes.iter())
        .filter(|b| !b.iscrowd)
        .count();
    Ok(pr_curve(&records, gt_count))
}

/// Detections produced by the pipeline for external consumption.
pub fn fused_records(
    output: &ExperimentOutput,
    dataset: &CocoDataset,
) -> Result<Vec<DetectionRecord>> {
    coco::sets_to_records(&output.fused, dataset)
}
