//! COCO-format JSON: annotation files in, detection-results files in and
//! out.
//!
//! Annotation boxes arrive as absolute `[x, y, w, h]` and are normalized
//! against their image size on ingestion; detection records are written
//! back in the same absolute convention, so files interchange directly
//! with other COCO tooling and real detector outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{GroundTruthSet, GtBox};
use crate::fusion::{Detection, DetectionSet};
use crate::geometry::{area, clip, convert, BBox, CoordSpace};
use crate::util::write_atomic;

#[derive(Debug, Clone, Deserialize)]
struct RawDataset {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    categories: Vec<RawCategory>,
}

#[derive(Debug, Clone, Deserialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default)]
    file_name: String,
}

#[derive(Debug, Clone, Deserialize)]
struct RawAnnotation {
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Debug, Clone, Deserialize)]
struct RawCategory {
    id: u64,
    #[serde(default)]
    name: String,
}

/// Maps the dataset's arbitrary category ids onto contiguous class
/// indices 0..C-1 (ascending id order) and back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTable {
    ids: Vec<u64>,
    names: Vec<String>,
    index: BTreeMap<u64, u32>,
}

impl CategoryTable {
    pub fn new(mut categories: Vec<(u64, String)>) -> Result<CategoryTable> {
        categories.sort_by_key(|(id, _)| *id);
        let mut index = BTreeMap::new();
        for (i, (id, _)) in categories.iter().enumerate() {
            if index.insert(*id, i as u32).is_some() {
                return Err(Error::data(format!("duplicate category id {id}")));
            }
        }
        Ok(CategoryTable {
            ids: categories.iter().map(|(id, _)| *id).collect(),
            names: categories.into_iter().map(|(_, name)| name).collect(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn class_of(&self, category_id: u64) -> Option<u32> {
        self.index.get(&category_id).copied()
    }

    pub fn category_of(&self, class_id: u32) -> Option<u64> {
        self.ids.get(class_id as usize).copied()
    }

    pub fn name_of(&self, class_id: u32) -> Option<&str> {
        self.names.get(class_id as usize).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

/// A loaded annotation file: images, category table, and ground truth in
/// normalized coordinates, everything ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub categories: CategoryTable,
    pub ground_truth: Vec<GroundTruthSet>,
}

impl CocoDataset {
    pub fn image(&self, image_id: u64) -> Option<&CocoImage> {
        self.images
            .binary_search_by_key(&image_id, |im| im.id)
            .ok()
            .map(|i| &self.images[i])
    }

    pub fn ground_truth_for(&self, image_id: u64) -> Option<&GroundTruthSet> {
        self.ground_truth
            .binary_search_by_key(&image_id, |gt| gt.image_id)
            .ok()
            .map(|i| &self.ground_truth[i])
    }

    pub fn num_classes(&self) -> u32 {
        self.categories.len() as u32
    }
}

/// Load a COCO annotation JSON (`images`, `annotations`, `categories`).
/// Unrelated top-level fields (info, licenses, ...) are ignored;
/// annotations referencing unknown images or categories are data errors.
/// Boxes are clipped to their image; boxes degenerate after clipping are
/// dropped.
pub fn load_annotations(path: &Path) -> Result<CocoDataset> {
    let raw: RawDataset = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    dataset_from_raw(raw, path)
}

fn dataset_from_raw(raw: RawDataset, path: &Path) -> Result<CocoDataset> {
    let categories =
        CategoryTable::new(raw.categories.into_iter().map(|c| (c.id, c.name)).collect())?;

    let mut images: Vec<CocoImage> = raw
        .images
        .into_iter()
        .map(|im| CocoImage { id: im.id, width: im.width, height: im.height, file_name: im.file_name })
        .collect();
    images.sort_by_key(|im| im.id);
    if images.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::data(format!("{}: duplicate image ids", path.display())));
    }
    if let Some(bad) = images.iter().find(|im| im.width == 0 || im.height == 0) {
        return Err(Error::data(format!(
            "{}: image {} has zero dimensions",
            path.display(),
            bad.id
        )));
    }

    let mut gt: BTreeMap<u64, Vec<GtBox>> = images.iter().map(|im| (im.id, Vec::new())).collect();
    for ann in raw.annotations {
        let image = images
            .binary_search_by_key(&ann.image_id, |im| im.id)
            .map(|i| &images[i])
            .map_err(|_| {
                Error::data(format!(
                    "{}: annotation references unknown image {}",
                    path.display(),
                    ann.image_id
                ))
            })?;
        let class_id = categories.class_of(ann.category_id).ok_or_else(|| {
            Error::data(format!(
                "{}: annotation references unknown category {}",
                path.display(),
                ann.category_id
            ))
        })?;
        let bbox = match normalized_from_xywh(ann.bbox, image.width, image.height) {
            Ok(Some(b)) => b,
            Ok(None) => continue, // degenerate after clipping
            Err(e) => {
                return Err(Error::data(format!(
                    "{}: bad bbox on image {}: {e}",
                    path.display(),
                    ann.image_id
                )))
            }
        };
        gt.get_mut(&ann.image_id)
            .expect("validated above")
            .push(GtBox { bbox, class_id, iscrowd: ann.iscrowd != 0 });
    }

    let ground_truth = gt
        .into_iter()
        .map(|(image_id, boxes)| GroundTruthSet { image_id, boxes })
        .collect();
    Ok(CocoDataset { images, categories, ground_truth })
}

/// `[x, y, w, h]` absolute -> normalized, clipped to the frame. `None`
/// when the clipped box has no area.
pub fn normalized_from_xywh(xywh: [f64; 4], width: u32, height: u32) -> Result<Option<BBox>> {
    let [x, y, w, h] = xywh;
    if w < 0.0 || h < 0.0 {
        return Err(Error::invalid_argument(format!("negative box extent {w}x{h}")));
    }
    let space = CoordSpace::absolute(width as f64, height as f64);
    let frame = BBox::new(0.0, 0.0, width as f64, height as f64, space)?;
    let absolute = clip(&BBox::new(x, y, x + w, y + h, space)?, &frame)?;
    let normalized = convert(&absolute, CoordSpace::Normalized)?;
    Ok((area(&normalized) > 0.0).then_some(normalized))
}

/// One line of a COCO detection-results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub category_id: u64,
    /// Absolute `[x, y, width, height]`.
    pub bbox: [f64; 4],
    pub score: f64,
}

pub fn read_detection_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn write_detection_records(records: &[DetectionRecord], path: &Path) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(records)?)
}

/// Group raw records into one normalized [`DetectionSet`] per dataset
/// image (ordered by image id, empty sets included), tagged `source_id`.
pub fn records_to_sets(
    records: &[DetectionRecord],
    dataset: &CocoDataset,
    source_id: u32,
    weight: f64,
) -> Result<Vec<DetectionSet>> {
    let mut by_image: BTreeMap<u64, Vec<Detection>> =
        dataset.images.iter().map(|im| (im.id, Vec::new())).collect();
    for rec in records {
        let image = dataset
            .image(rec.image_id)
            .ok_or_else(|| Error::data(format!("detections reference unknown image {}", rec.image_id)))?;
        let class_id = dataset.categories.class_of(rec.category_id).ok_or_else(|| {
            Error::data(format!("detections reference unknown category {}", rec.category_id))
        })?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(Error::data(format!(
                "detection score {} out of [0,1] on image {}",
                rec.score, rec.image_id
            )));
        }
        let Some(bbox) = normalized_from_xywh(rec.bbox, image.width, image.height)
            .map_err(|e| Error::data(format!("image {}: {e}", rec.image_id)))?
        else {
            continue;
        };
        by_image
            .get_mut(&rec.image_id)
            .expect("validated above")
            .push(Detection::new(bbox, class_id, rec.score, source_id)?);
    }
    by_image
        .into_iter()
        .map(|(image_id, detections)| DetectionSet::new(image_id, detections, weight))
        .collect()
}

/// Flatten detection sets back into absolute-coordinate records.
pub fn sets_to_records(sets: &[DetectionSet], dataset: &CocoDataset) -> Result<Vec<DetectionRecord>> {
    let mut records = Vec::new();
    for set in sets {
        let image = dataset
            .image(set.image_id)
            .ok_or_else(|| Error::data(format!("unknown image {}", set.image_id)))?;
        let space = CoordSpace::absolute(image.width as f64, image.height as f64);
        for det in &set.detections {
            let category_id = dataset.categories.category_of(det.class_id).ok_or_else(|| {
                Error::data(format!("class {} missing from the category table", det.class_id))
            })?;
            let b = convert(&det.bbox, space)?;
            records.push(DetectionRecord {
                image_id: set.image_id,
                category_id,
                bbox: [b.x_min, b.y_min, b.width(), b.height()],
                score: det.confidence,
            });
        }
    }
    Ok(records)
}
