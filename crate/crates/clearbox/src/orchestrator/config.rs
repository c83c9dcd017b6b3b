//! The experiment config: one JSON document drives the whole pipeline.
//!
//! The schema is versioned and strict; unknown fields are parse errors, so
//! typos fail loudly instead of silently running a different experiment.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionSpec, OracleSpec};
use crate::error::{Error, Result};
use crate::evaluator::EvalConfig;
use crate::fusion::{derive_weights, FusionConfig};
use crate::purifier::StageSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Default oracle quality for variants that do not state one.
pub const DEFAULT_ORACLE_QUALITY: f64 = 0.7;

/// Quality bonus the oracle detector grants when `large_size` is on; the
/// simulator's stand-in for feeding the detector higher-resolution input.
pub const LARGE_SIZE_QUALITY_BONUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub images_dir: PathBuf,
    pub annotations: PathBuf,
}

/// A variant's ensemble weight: a number, or `"derive"` to compute it
/// from `benchmark_scores` (proportional to score, mean 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Fixed(f64),
    Keyword(String),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Fixed(1.0)
    }
}

impl WeightSpec {
    fn is_derive(&self) -> bool {
        matches!(self, WeightSpec::Keyword(k) if k == "derive")
    }
}

/// One purifier variant: a stage sequence plus fusion weight. With the
/// oracle detector, `oracle_quality` sets how good this variant's
/// synthetic detections are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantConfig {
    pub id: String,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub oracle_quality: Option<f64>,
}

/// Where detections come from: the synthetic oracle, precomputed COCO
/// results files (one per variant), or an external detector command run
/// per purified image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorConfig {
    Oracle(OracleSpec),
    DetectionFiles { files: BTreeMap<String, PathBuf> },
    ExternalCommand {
        command: String,
        #[serde(default = "default_detector_timeout")]
        timeout_secs: u64,
    },
}

fn default_detector_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    #[default]
    Wbf,
    /// Pool all variants' boxes and apply plain NMS; the comparison
    /// baseline the WBF ablation row toggles against.
    Nms,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSettings {
    pub method: FusionMethod,
    pub config: FusionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    pub variants: Vec<VariantConfig>,
    pub detector: DetectorConfig,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Distortions the `distort` command applies when driven by this
    /// config; `run` itself never distorts.
    #[serde(default)]
    pub distortion: Option<Vec<DistortionSpec>>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Cap on concurrent external-stage/detector subprocesses, separate
    /// from `workers` (default: no extra cap).
    #[serde(default)]
    pub max_external_procs: Option<usize>,
    /// Feed the detector enlarged input. The oracle models this as a
    /// `LARGE_SIZE_QUALITY_BONUS` bump to every variant's quality;
    /// external commands see `CLEARBOX_LARGE_SIZE=1` in the environment.
    #[serde(default)]
    pub large_size: bool,
    /// Per-variant benchmark scores (e.g. denoiser PSNR on a reference
    /// set) backing `"weight": "derive"`.
    #[serde(default)]
    pub benchmark_scores: Option<BTreeMap<String, f64>>,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    /// Structural validation plus existence checks on referenced paths.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if !self.dataset.annotations.is_file() {
            return Err(Error::config(format!(
                "annotations file not found: {}",
                self.dataset.annotations.display()
            )));
        }
        if !self.dataset.images_dir.is_dir() {
            return Err(Error::config(format!(
                "images dir not found: {}",
                self.dataset.images_dir.display()
            )));
        }
        if let DetectorConfig::DetectionFiles { files } = &self.detector {
            for (variant, path) in files {
                if !path.is_file() {
                    return Err(Error::config(format!(
                        "detection file for variant {variant:?} not found: {}",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Everything `validate` checks except filesystem lookups.
    pub fn validate_structure(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::config("at least one variant is required"));
        }
        let mut ids = BTreeSet::new();
        for variant in &self.variants {
            if variant.id.is_empty() {
                return Err(Error::config("variant ids must be non-empty"));
            }
            if !ids.insert(variant.id.as_str()) {
                return Err(Error::config(format!("duplicate variant id {:?}", variant.id)));
            }
            for stage in &variant.stages {
                stage.validate()?;
            }
            match &variant.weight {
                WeightSpec::Fixed(w) if w.is_nan() || *w <= 0.0 => {
                    return Err(Error::config(format!(
                        "variant {:?} weight must be positive, got {w}",
                        variant.id
                    )));
                }
                WeightSpec::Keyword(k) if k != "derive" => {
                    return Err(Error::config(format!(
                        "variant {:?} weight must be a number or \"derive\", got {k:?}",
                        variant.id
                    )));
                }
                _ => {}
            }
            if let Some(q) = variant.oracle_quality {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::config(format!(
                        "variant {:?} oracle_quality must be in [0,1]",
                        variant.id
                    )));
                }
            }
        }
        match &self.detector {
            DetectorConfig::Oracle(spec) => spec.validate()?,
            DetectorConfig::DetectionFiles { files } => {
                for variant in &self.variants {
                    if !files.contains_key(&variant.id) {
                        return Err(Error::config(format!(
                            "no detection file configured for variant {:?}",
                            variant.id
                        )));
                    }
                }
            }
            DetectorConfig::ExternalCommand { command, .. } => {
                if !command.contains("{input}") || !command.contains("{output}") {
                    return Err(Error::config(
                        "detector command needs {input} and {output} placeholders",
                    ));
                }
            }
        }
        self.fusion.config.validate()?;
        self.eval.validate()?;
        self.resolve_weights()?;
        Ok(())
    }

    /// Final per-variant weights, with `"derive"` entries filled in from
    /// `benchmark_scores`.
    pub fn resolve_weights(&self) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        let deriving: Vec<&VariantConfig> =
            self.variants.iter().filter(|v| v.weight.is_derive()).collect();
        if !deriving.is_empty() {
            let scores = self.benchmark_scores.as_ref().ok_or_else(|| {
                Error::config("\"derive\" weights need top-level benchmark_scores")
            })?;
            let mut subset = BTreeMap::new();
            for v in &deriving {
                let score = scores.get(&v.id).ok_or_else(|| {
                    Error::config(format!("no benchmark score for variant {:?}", v.id))
                })?;
                subset.insert(v.id.clone(), *score);
            }
            out.extend(derive_weights(&subset)?);
        }
        for v in &self.variants {
            if let WeightSpec::Fixed(w) = v.weight {
                out.insert(v.id.clone(), w);
            }
        }
        Ok(out)
    }

    /// Oracle quality for one variant, including the large-size bonus.
    pub fn oracle_quality(&self, variant: &VariantConfig) -> f64 {
        let base = variant.oracle_quality.unwrap_or(DEFAULT_ORACLE_QUALITY);
        let bonus = if self.large_size { LARGE_SIZE_QUALITY_BONUS } else { 0.0 };
        (base + bonus).clamp(0.0, 1.0)
    }
}
