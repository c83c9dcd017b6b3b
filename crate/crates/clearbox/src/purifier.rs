//! The multi-stage image purifier: real-noise denoising, motion deblurring
//! and upscaling, composed in a configurable order.
//!
//! The built-in stages are classical filters chosen so the whole pipeline
//! runs and is testable at desk scale; an [`StageSpec::External`] stage
//! shells out to any neural restorer (Restormer, NAFNet, KBNet,
//! Real-ESRGAN, ...) through a file-exchange contract, so the same
//! pipeline drives real models when they are available.

pub mod conv;
pub mod deblur;
pub mod denoise;
pub mod metrics;
pub mod scale;

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use deblur::{motion_psf, richardson_lucy, wiener_deblur, Psf};
pub use denoise::{gaussian_denoise, median_denoise};
pub use metrics::{concentration_metrics, histogram, ConcentrationMetrics, Histogram};
pub use scale::{upscale, Interp};

use crate::error::{Error, Result};
use crate::image::io::{read_image, write_image, ImageFormat};
use crate::image::ImageBuffer;

/// Which purifier slot a stage fills. Ablations toggle and reorder stages
/// by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageRole {
    RealDenoise,
    MotionDeblur,
    Upscale,
}

impl StageRole {
    /// Two-letter tag used in ablation labels and CLI ordering arguments.
    pub fn tag(&self) -> &'static str {
        match self {
            StageRole::RealDenoise => "RD",
            StageRole::MotionDeblur => "MD",
            StageRole::Upscale => "RE",
        }
    }

    pub fn from_tag(tag: &str) -> Result<StageRole> {
        match tag.to_ascii_uppercase().as_str() {
            "RD" => Ok(StageRole::RealDenoise),
            "MD" => Ok(StageRole::MotionDeblur),
            "RE" => Ok(StageRole::Upscale),
            other => Err(Error::config(format!(
                "unknown stage tag {other:?}, expected RD, MD or RE"
            ))),
        }
    }
}

/// Line-motion PSF parameters as they appear in config files; the kernel
/// itself is built by [`motion_psf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsfSpec {
    pub length: usize,
    #[serde(default)]
    pub angle_degrees: f64,
}

impl PsfSpec {
    pub fn build(&self) -> Result<Psf> {
        motion_psf(self.length, self.angle_degrees)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMethod {
    Median {
        radius: usize,
    },
    Gaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeblurMethod {
    Wiener {
        psf: PsfSpec,
        noise_power: f64,
    },
    RichardsonLucy {
        psf: PsfSpec,
        iterations: usize,
    },
}

/// One external-process stage: `command` runs with `{input}` and
/// `{output}` substituted by temp-file paths in the chosen exchange
/// format. `metadata` is opaque bookkeeping (model settings and the like)
/// that the toolkit carries along but never interprets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalStage {
    pub command: String,
    #[serde(default = "default_exchange_format")]
    pub format: ExchangeFormat,
    #[serde(default)]
    pub role: Option<StageRole>,
    #[serde(default = "default_external_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub metadata: Option<serde_json::Value>,
}

fn default_exchange_format() -> ExchangeFormat {
    ExchangeFormat::Png
}

fn default_external_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeFormat {
    Png,
    Pnm,
}

impl ExchangeFormat {
    fn image_format(&self) -> ImageFormat {
        match self {
            ExchangeFormat::Png => ImageFormat::Png,
            ExchangeFormat::Pnm => ImageFormat::Pnm,
        }
    }
}

/// One purifier stage. Serialized as an externally tagged enum, so configs
/// read e.g. `{"real_denoise": {"median": {"radius": 1}}}`; unknown kinds
/// are rejected at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSpec {
    RealDenoise(DenoiseMethod),
    MotionDeblur(DeblurMethod),
    Upscale {
        factor: usize,
        interp: Interp,
    },
    External(ExternalStage),
}

impl StageSpec {
    pub fn role(&self) -> Option<StageRole> {
        match self {
            StageSpec::RealDenoise(_) => Some(StageRole::RealDenoise),
            StageSpec::MotionDeblur(_) => Some(StageRole::MotionDeblur),
            StageSpec::Upscale { .. } => Some(StageRole::Upscale),
            StageSpec::External(ext) => ext.role,
        }
    }

    /// Check parameter ranges without touching any image.
    pub fn validate(&self) -> Result<()> {
        match self {
            StageSpec::RealDenoise(DenoiseMethod::Median { radius }) => {
                if *radius < 1 {
                    return Err(Error::config("median radius must be >= 1"));
                }
            }
            StageSpec::RealDenoise(DenoiseMethod::Gaussian { sigma }) => {
                if sigma.is_nan() || *sigma <= 0.0 {
                    return Err(Error::config("gaussian sigma must be > 0"));
                }
            }
            StageSpec::MotionDeblur(DeblurMethod::Wiener { psf, noise_power }) => {
                if psf.length < 1 {
                    return Err(Error::config("psf length must be >= 1"));
                }
                if noise_power.is_nan() || *noise_power < 0.0 {
                    return Err(Error::config("wiener noise_power must be >= 0"));
                }
            }
            StageSpec::MotionDeblur(DeblurMethod::RichardsonLucy { psf, iterations }) => {
                if psf.length < 1 {
                    return Err(Error::config("psf length must be >= 1"));
                }
                if *iterations < 1 {
                    return Err(Error::config("richardson-lucy iterations must be >= 1"));
                }
            }
            StageSpec::Upscale { factor, .. } => {
                if ![2, 3, 4].contains(factor) {
                    return Err(Error::config(format!(
                        "upscale factor must be 2, 3 or 4, got {factor}"
                    )));
                }
            }
            StageSpec::External(ext) => {
                if !ext.command.contains("{input}") || !ext.command.contains("{output}") {
                    return Err(Error::config(
                        "external command template needs {input} and {output} placeholders",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        self.validate()?;
        match self {
            StageSpec::RealDenoise(DenoiseMethod::Median { radius }) => median_denoise(img, *radius),
            StageSpec::RealDenoise(DenoiseMethod::Gaussian { sigma }) => gaussian_denoise(img, *sigma),
            StageSpec::MotionDeblur(DeblurMethod::Wiener { psf, noise_power }) => {
                wiener_deblur(img, &psf.build()?, *noise_power)
            }
            StageSpec::MotionDeblur(DeblurMethod::RichardsonLucy { psf, iterations }) => {
                richardson_lucy(img, &psf.build()?, *iterations)
            }
            StageSpec::Upscale { factor, interp } => upscale(img, *factor, *interp),
            StageSpec::External(ext) => run_external_stage(img, ext),
        }
    }
}

/// Run `stages` strictly in order. Stage failures carry the failing
/// stage's index.
pub fn run_pipeline(img: &ImageBuffer, stages: &[StageSpec]) -> Result<ImageBuffer> {
    if stages.is_empty() {
        return Err(Error::invalid_argument("pipeline needs at least one stage"));
    }
    let mut current = img.clone();
    for (index, stage) in stages.iter().enumerate() {
        current = stage.apply(&current).map_err(|e| e.at_stage(index))?;
    }
    Ok(current)
}

/// Hand the image to an external command through temp files and read the
/// restored result back.
pub fn run_external_stage(img: &ImageBuffer, ext: &ExternalStage) -> Result<ImageBuffer> {
    let dir = tempfile::Builder::new().prefix("clearbox-stage-").tempdir()?;
    let ext_name = ext.format.image_format().extension(img.channels());
    let input = dir.path().join(format!("input.{ext_name}"));
    let output = dir.path().join(format!("output.{ext_name}"));
    write_image(img, &input)?;

    let cmd = ext
        .command
        .replace("{input}", &input.display().to_string())
        .replace("{output}", &output.display().to_string());
    crate::util::run_shell_with_timeout(&cmd, Duration::from_secs(ext.timeout_secs), &[])?;

    if !output.exists() {
        return Err(Error::External(format!(
            "command produced no output image: {cmd}"
        )));
    }
    let restored = read_image(&output)
        .map_err(|e| Error::External(format!("malformed output image: {e}")))?;
    Ok(restored)
}

/// Persist per-stage outputs next to `base` as `<base>.stage<k>.png`.
/// Purely a debugging aid for inspecting what each stage did.
pub fn run_pipeline_traced(
    img: &ImageBuffer,
    stages: &[StageSpec],
    base: &Path,
) -> Result<ImageBuffer> {
    if stages.is_empty() {
        return Err(Error::invalid_argument("pipeline needs at least one stage"));
    }
    let mut current = img.clone();
    for (index, stage) in stages.iter().enumerate() {
        current = stage.apply(&current).map_err(|e| e.at_stage(index))?;
        let path = base.with_extension(format!("stage{index}.png"));
        write_image(&current, &path)?;
    }
    Ok(current)
}
