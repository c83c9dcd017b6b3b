//! Synthetic distortion injection and a synthetic detector oracle.
//!
//! Together these stand in for a distorted benchmark dataset and a trained
//! detector, so the purify -> detect -> fuse -> evaluate loop can be
//! exercised and measured end to end at desk scale. Both are pure
//! functions of their inputs and a seed (see [`crate::rng`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::GroundTruthSet;
use crate::fusion::{Detection, DetectionSet};
use crate::geometry::{area, BBox, CoordSpace};
use crate::image::ImageBuffer;
use crate::purifier::motion_psf;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    /// I.i.d. additive Gaussian noise, clamped to [0, 1].
    GaussianNoise { sigma: f64 },
    /// Convolution with a linear motion PSF.
    MotionBlur {
        length: usize,
        #[serde(default)]
        angle_degrees: f64,
    },
    /// Box-average by `factor`, then nearest-neighbor back to the original
    /// canvas: resolution loss at unchanged size.
    Downsample { factor: usize },
}

impl DistortionKind {
    /// Documented severity presets: noise sigma {0.02, 0.05, 0.1}.
    pub fn noise(severity: Severity) -> DistortionKind {
        let sigma = match severity {
            Severity::Low => 0.02,
            Severity::Medium => 0.05,
            Severity::High => 0.1,
        };
        DistortionKind::GaussianNoise { sigma }
    }

    /// Documented severity presets: blur length {5, 9, 15} pixels.
    pub fn blur(severity: Severity, angle_degrees: f64) -> DistortionKind {
        let length = match severity {
            Severity::Low => 5,
            Severity::Medium => 9,
            Severity::High => 15,
        };
        DistortionKind::MotionBlur { length, angle_degrees }
    }

    /// Documented severity presets: downsample factor {2, 2, 4}.
    pub fn downsample(severity: Severity) -> DistortionKind {
        let factor = match severity {
            Severity::Low | Severity::Medium => 2,
            Severity::High => 4,
        };
        DistortionKind::Downsample { factor }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DistortionKind::GaussianNoise { sigma } => {
                if sigma.is_nan() || *sigma <= 0.0 {
                    return Err(Error::config("noise sigma must be > 0"));
                }
            }
            DistortionKind::MotionBlur { length, .. } => {
                if *length < 1 {
                    return Err(Error::config("blur length must be >= 1"));
                }
            }
            DistortionKind::Downsample { factor } => {
                if ![2, 4].contains(factor) {
                    return Err(Error::config("downsample factor must be 2 or 4"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    #[serde(default)]
    pub seed: u64,
}

/// Apply one distortion. Bit-identical output for identical inputs and
/// seed.
pub fn distort(img: &ImageBuffer, spec: &DistortionSpec) -> Result<ImageBuffer> {
    spec.kind.validate()?;
    match &spec.kind {
        DistortionKind::GaussianNoise { sigma } => {
            let mut rng = SplitMix64::for_stream(spec.seed, 0, "distort.noise");
            let mut out = img.clone();
            for c in 0..img.channels() {
                let plane: Vec<f64> = img
                    .plane(c)
                    .iter()
                    .map(|&v| v + sigma * rng.next_gaussian())
                    .collect();
                out.set_plane(c, &plane);
            }
            Ok(out)
        }
        DistortionKind::MotionBlur { length, angle_degrees } => {
            let psf = motion_psf(*length, *angle_degrees)?;
            Ok(psf.blur(img))
        }
        DistortionKind::Downsample { factor } => {
            let f = *factor;
            let (w, h) = (img.width(), img.height());
            let (sw, sh) = (w.div_ceil(f), h.div_ceil(f));
            let mut out = img.clone();
            for c in 0..img.channels() {
                let src = img.plane(c);
                let mut small = vec![0.0; sw * sh];
                for by in 0..sh {
                    for bx in 0..sw {
                        let mut sum = 0.0;
                        let mut count = 0usize;
                        for y in (by * f)..((by * f + f).min(h)) {
                            for x in (bx * f)..((bx * f + f).min(w)) {
                                sum += src[y * w + x];
                                count += 1;
                            }
                        }
                        small[by * sw + bx] = sum / count as f64;
                    }
                }
                let plane: Vec<f64> = (0..w * h)
                    .map(|i| small[(i / w / f) * sw + (i % w) / f])
                    .collect();
                out.set_plane(c, &plane);
            }
            Ok(out)
        }
    }
}

/// How a perturbed detection's confidence is produced: `base` minus a
/// penalty proportional to the relative jitter, plus Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceModel {
    pub base: f64,
    pub jitter_penalty: f64,
    pub noise_sigma: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        ConfidenceModel { base: 0.9, jitter_penalty: 1.0, noise_sigma: 0.05 }
    }
}

/// A detector emulator that perturbs ground truth.
///
/// For a variant of quality `q`, each target is dropped with probability
/// `drop_probability * (1 - q)`, surviving boxes get corner jitter with
/// sigma `coordinate_jitter_sigma * (1 - q)` (relative to box size), and
/// spurious detections arrive Poisson-distributed at
/// `false_positive_rate` per image with confidence uniform in
/// `(0, base / 2]`. Crowd ground truth is never emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub coordinate_jitter_sigma: f64,
    pub drop_probability: f64,
    #[serde(default)]
    pub confidence_model: ConfidenceModel,
    pub false_positive_rate: f64,
    pub num_classes: u32,
    #[serde(default)]
    pub seed: u64,
}

impl OracleSpec {
    /// Zero-noise detector: reproduces ground truth with confidence 1.
    pub fn perfect(num_classes: u32) -> OracleSpec {
        OracleSpec {
            coordinate_jitter_sigma: 0.0,
            drop_probability: 0.0,
            confidence_model: ConfidenceModel { base: 1.0, jitter_penalty: 0.0, noise_sigma: 0.0 },
            false_positive_rate: 0.0,
            num_classes,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::config("drop_probability must be in [0,1)"));
        }
        if self.coordinate_jitter_sigma.is_nan() || self.coordinate_jitter_sigma < 0.0 {
            return Err(Error::config("coordinate_jitter_sigma must be >= 0"));
        }
        if self.false_positive_rate.is_nan() || self.false_positive_rate < 0.0 {
            return Err(Error::config("false_positive_rate must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.confidence_model.base) {
            return Err(Error::config("confidence base must be in [0,1]"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("oracle needs at least one class"));
        }
        Ok(())
    }
}

/// Emit synthetic detections for one image and one variant.
///
/// Deterministic per `(spec.seed, image_id, variant_tag)`; `source_id`
/// tags the emitted detections for fusion bookkeeping.
pub fn oracle_detect(
    gt: &GroundTruthSet,
    variant_tag: &str,
    source_id: u32,
    variant_quality: f64,
    spec: &OracleSpec,
) -> Result<DetectionSet> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&variant_quality) {
        return Err(Error::invalid_argument("variant_quality must be in [0,1]"));
    }
    let degradation = 1.0 - variant_quality;
    let mut rng = SplitMix64::for_stream(spec.seed, gt.image_id, variant_tag);
    let base = spec.confidence_model.base;

    let mut detections = Vec::new();
    for g in &gt.boxes {
        if g.iscrowd || area(&g.bbox) <= 0.0 || g.bbox.coord_space != CoordSpace::Normalized {
            continue;
        }
        if rng.next_f64() < spec.drop_probability * degradation {
            continue;
        }
        let sx = spec.coordinate_jitter_sigma * degradation * g.bbox.width();
        let sy = spec.coordinate_jitter_sigma * degradation * g.bbox.height();
        let dx1 = sx * rng.next_gaussian();
        let dx2 = sx * rng.next_gaussian();
        let dy1 = sy * rng.next_gaussian();
        let dy2 = sy * rng.next_gaussian();
        let mut x1 = g.bbox.x_min + dx1;
        let mut x2 = g.bbox.x_max + dx2;
        let mut y1 = g.bbox.y_min + dy1;
        let mut y2 = g.bbox.y_max + dy2;
        if x1 > x2 {
            std::mem::swap(&mut x1, &mut x2);
        }
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
        }
        let bbox = BBox::normalized(x1, y1, x2, y2)?;
        // Relative displacement drives the confidence penalty.
        let jitter = 0.5
            * ((dx1.abs() + dx2.abs()) / (2.0 * g.bbox.width())
                + (dy1.abs() + dy2.abs()) / (2.0 * g.bbox.height()));
        let noise = spec.confidence_model.noise_sigma * rng.next_gaussian();
        let confidence =
            (base - spec.confidence_model.jitter_penalty * jitter + noise).clamp(0.0, 1.0);
        if area(&bbox) <= 0.0 {
            continue; // jittered into degeneracy; treat as a miss
        }
        detections.push(Detection::new(bbox, g.class_id, confidence, source_id)?);
    }

    let spurious = rng.next_poisson(spec.false_positive_rate);
    for _ in 0..spurious {
        let class_id = rng.next_below(spec.num_classes as u64) as u32;
        let cx = rng.next_f64();
        let cy = rng.next_f64();
        let w = rng.next_range(0.05, 0.25);
        let h = rng.next_range(0.05, 0.25);
        let confidence = rng.next_range(1e-3, 0.5) * base;
        let bbox = BBox::normalized(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)?;
        if area(&bbox) <= 0.0 || confidence <= 0.0 {
            continue;
        }
        detections.push(Detection::new(bbox, class_id, confidence, source_id)?);
    }

    DetectionSet::new(gt.image_id, detections, 1.0)
}
