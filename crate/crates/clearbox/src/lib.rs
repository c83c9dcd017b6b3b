//! clearbox: detection under distortion, end to end at desk scale.
//!
//! The toolkit mirrors the structure of production pipelines that detect
//! objects in degraded images: a multi-stage image purifier (real-noise
//! denoising, motion deblurring, upscaling), detection over several
//! restored variants of each image, Weighted Boxes Fusion of the
//! per-variant detections, and COCO-style evaluation. A synthetic
//! distortion injector and a detector oracle stand in for a distorted
//! dataset and a trained detector, so the whole loop — including the
//! component and stage-ordering ablations — runs, measures, and
//! reproduces bit-for-bit from a single JSON config and seed.

pub mod coco;
pub mod distortion;
pub mod error;
pub mod evaluator;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod orchestrator;
pub mod purifier;
pub mod rng;
mod util;

pub use coco::{CategoryTable, CocoDataset, DetectionRecord};
pub use distortion::{DistortionKind, DistortionSpec, OracleSpec, Severity};
pub use error::{Error, Result};
pub use evaluator::{EvalConfig, EvalResult, GroundTruthSet, GtBox};
pub use fusion::{Detection, DetectionSet, FusionConfig, RescaleMode};
pub use geometry::{BBox, CoordSpace};
pub use image::ImageBuffer;
pub use orchestrator::{AblationReport, ComponentToggle, ExperimentOutput, PipelineConfig};
pub use purifier::{Psf, StageRole, StageSpec};
pub use util::set_external_process_limit;
