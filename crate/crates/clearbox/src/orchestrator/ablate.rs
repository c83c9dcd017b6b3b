//! Ablation runners: cumulative component toggles and purifier stage
//! orderings, one full experiment per report row.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::EvalResult;
use crate::orchestrator::config::{FusionMethod, PipelineConfig};
use crate::orchestrator::report::{metrics_csv, metrics_table};
use crate::orchestrator::run_experiment;
use crate::purifier::{StageRole, StageSpec};
use crate::util::write_atomic;

/// Pipeline components the cumulative ablation switches on one by one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentToggle {
    RealDenoise,
    MotionDeblur,
    Upscale,
    LargeSize,
    /// All configured variants beyond the first.
    ExtraVariants,
    Wbf,
}

impl ComponentToggle {
    pub fn label(&self) -> &'static str {
        match self {
            ComponentToggle::RealDenoise => "RD",
            ComponentToggle::MotionDeblur => "MD",
            ComponentToggle::Upscale => "RE",
            ComponentToggle::LargeSize => "large",
            ComponentToggle::ExtraVariants => "variants",
            ComponentToggle::Wbf => "WBF",
        }
    }

    pub fn parse(token: &str) -> Result<ComponentToggle> {
        match token.to_ascii_lowercase().as_str() {
            "rd" | "real_denoise" | "real-denoise" => Ok(ComponentToggle::RealDenoise),
            "md" | "motion_deblur" | "motion-deblur" => Ok(ComponentToggle::MotionDeblur),
            "re" | "upscale" => Ok(ComponentToggle::Upscale),
            "large" | "large_size" | "large-size" => Ok(ComponentToggle::LargeSize),
            "variants" | "extra_variants" | "extra-variants" => Ok(ComponentToggle::ExtraVariants),
            "wbf" => Ok(ComponentToggle::Wbf),
            other => Err(Error::config(format!("unknown component toggle {other:?}"))),
        }
    }

    /// The default nine-row toggle order: purifier stages first, then
    /// detector input size, extra variants, and fusion.
    pub fn default_sequence() -> Vec<ComponentToggle> {
        vec![
            ComponentToggle::RealDenoise,
            ComponentToggle::MotionDeblur,
            ComponentToggle::Upscale,
            ComponentToggle::LargeSize,
            ComponentToggle::ExtraVariants,
            ComponentToggle::Wbf,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let rows: Vec<(String, &EvalResult)> =
            self.rows.iter().map(|r| (r.label.clone(), &r.result)).collect();
        metrics_table(&rows)
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<(String, &EvalResult)> =
            self.rows.iter().map(|r| (r.label.clone(), &r.result)).collect();
        metrics_csv(&rows)
    }

    fn persist(&self, cfg: &PipelineConfig, stem: &str) -> Result<()> {
        let dir = cfg.output_dir.join(stem);
        write_atomic(&dir.join("report.json"), &serde_json::to_vec_pretty(self)?)?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&dir.join("report.txt"), self.to_table().as_bytes())?;
        Ok(())
    }
}

/// Build the config for one component-ablation row: everything in
/// `disabled` is stripped from the full config.
fn apply_toggles(cfg: &PipelineConfig, disabled: &BTreeSet<ComponentToggle>) -> PipelineConfig {
    let mut row = cfg.clone();
    let stripped_roles: Vec<StageRole> = disabled
        .iter()
        .filter_map(|t| match t {
            ComponentToggle::RealDenoise => Some(StageRole::RealDenoise),
            ComponentToggle::MotionDeblur => Some(StageRole::MotionDeblur),
            ComponentToggle::Upscale => Some(StageRole::Upscale),
            _ => None,
        })
        .collect();
    for variant in &mut row.variants {
        variant
            .stages
            .retain(|stage| stage.role().map_or(true, |role| !stripped_roles.contains(&role)));
    }
    if disabled.contains(&ComponentToggle::ExtraVariants) {
        row.variants.truncate(1);
    }
    if disabled.contains(&ComponentToggle::LargeSize) {
        row.large_size = false;
    }
    if disabled.contains(&ComponentToggle::Wbf) {
        row.fusion.method = FusionMethod::Nms;
    }
    row
}

/// Cumulative component ablation: row 0 is the baseline with every listed
/// toggle off; row k re-enables the first k toggles. The full input
/// config defines the all-on end state.
pub fn ablate_components(
    cfg: &PipelineConfig,
    toggles: &[ComponentToggle],
) -> Result<AblationReport> {
    cfg.validate()?;
    let unique: BTreeSet<ComponentToggle> = toggles.iter().copied().collect();
    if unique.len() != toggles.len() {
        return Err(Error::config("component toggles must be distinct"));
    }
    let mut rows = Vec::new();
    for k in 0..=toggles.len() {
        let disabled: BTreeSet<ComponentToggle> = toggles[k..].iter().copied().collect();
        let label = if k == 0 {
            "baseline".to_string()
        } else {
            toggles[..k].iter().map(|t| format!("+{}", t.label())).collect::<Vec<_>>().join("")
        };
        let mut row_cfg = apply_toggles(cfg, &disabled);
        row_cfg.output_dir = cfg.output_dir.join("ablation_components").join(format!("row{k:02}"));
        let output = run_experiment(&row_cfg)
            .map_err(|e| e.in_context(format!("ablation row {label:?}")))?;
        rows.push(AblationRow { label, result: output.result });
    }
    let report = AblationReport { rows };
    report.persist(cfg, "ablation_components")?;
    Ok(report)
}

/// Exhaustive component ablation: one row per subset of `toggles`, in
/// binary counting order (bit k of the row index enables `toggles[k]`).
/// 2^n experiments; the cumulative [`ablate_components`] is the default
/// for a reason.
pub fn ablate_components_grid(
    cfg: &PipelineConfig,
    toggles: &[ComponentToggle],
) -> Result<AblationReport> {
    cfg.validate()?;
    let unique: BTreeSet<ComponentToggle> = toggles.iter().copied().collect();
    if unique.len() != toggles.len() {
        return Err(Error::config("component toggles must be distinct"));
    }
    if toggles.len() > 8 {
        return Err(Error::config("grid ablation is capped at 8 toggles (256 runs)"));
    }
    let mut rows = Vec::new();
    for mask in 0u32..(1 << toggles.len()) {
        let disabled: BTreeSet<ComponentToggle> = toggles
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) == 0)
            .map(|(_, t)| *t)
            .collect();
        let enabled: Vec<&ComponentToggle> = toggles
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, t)| t)
            .collect();
        let label = if enabled.is_empty() {
            "none".to_string()
        } else {
            enabled.iter().map(|t| format!("+{}", t.label())).collect::<Vec<_>>().join("")
        };
        let mut row_cfg = apply_toggles(cfg, &disabled);
        row_cfg.output_dir =
            cfg.output_dir.join("ablation_components_grid").join(format!("row{mask:03}"));
        let output = run_experiment(&row_cfg)
            .map_err(|e| e.in_context(format!("grid row {label:?}")))?;
        rows.push(AblationRow { label, result: output.result });
    }
    let report = AblationReport { rows };
    report.persist(cfg, "ablation_components_grid")?;
    Ok(report)
}

/// Reorder every variant's stages to follow `ordering` (stable within one
/// role). Errors if a stage has no role or its role is missing from the
/// ordering, or an ordering entry matches no configured stage.
pub fn reorder_stages(cfg: &PipelineConfig, ordering: &[StageRole]) -> Result<PipelineConfig> {
    let mut seen = BTreeSet::new();
    for role in ordering {
        if !seen.insert(*role) {
            return Err(Error::config(format!("ordering repeats {}", role.tag())));
        }
    }
    let mut configured: BTreeSet<StageRole> = BTreeSet::new();
    for variant in &cfg.variants {
        for (i, stage) in variant.stages.iter().enumerate() {
            match stage.role() {
                Some(role) => {
                    configured.insert(role);
                }
                None => {
                    return Err(Error::config(format!(
                        "variant {:?} stage {i} has no role; orderings need role-tagged stages",
                        variant.id
                    )));
                }
            }
        }
    }
    for role in &configured {
        if !ordering.contains(role) {
            return Err(Error::config(format!(
                "ordering omits configured stage kind {}",
                role.tag()
            )));
        }
    }
    for role in ordering {
        if !configured.contains(role) {
            return Err(Error::config(format!(
                "ordering references unconfigured stage kind {}",
                role.tag()
            )));
        }
    }

    let mut row = cfg.clone();
    for variant in &mut row.variants {
        let mut reordered: Vec<StageSpec> = Vec::with_capacity(variant.stages.len());
        for role in ordering {
            reordered.extend(
                variant.stages.iter().filter(|s| s.role() == Some(*role)).cloned(),
            );
        }
        variant.stages = reordered;
    }
    Ok(row)
}

pub fn ordering_label(ordering: &[StageRole]) -> String {
    ordering.iter().map(|r| r.tag()).collect::<Vec<_>>().join("->")
}

/// The four stage orders the ordering ablation reports by default.
pub fn default_orderings() -> Vec<Vec<StageRole>> {
    use StageRole::{MotionDeblur as MD, RealDenoise as RD, Upscale as RE};
    vec![
        vec![RD, RE, MD],
        vec![MD, RD, RE],
        vec![MD, RE, RD],
        vec![RD, MD, RE],
    ]
}

/// One full experiment per stage ordering.
pub fn ablate_orderings(
    cfg: &PipelineConfig,
    orderings: &[Vec<StageRole>],
) -> Result<AblationReport> {
    cfg.validate()?;
    if orderings.is_empty() {
        return Err(Error::config("at least one ordering is required"));
    }
    let mut rows = Vec::new();
    for (k, ordering) in orderings.iter().enumerate() {
        let label = ordering_label(ordering);
        let mut row_cfg = reorder_stages(cfg, ordering)?;
        row_cfg.output_dir = cfg.output_dir.join("ablation_orderings").join(format!("row{k:02}"));
        let output = run_experiment(&row_cfg)
            .map_err(|e| e.in_context(format!("ordering {label}")))?;
        rows.push(AblationRow { label, result: output.result });
    }
    let report = AblationReport { rows };
    report.persist(cfg, "ablation_orderings")?;
    Ok(report)
}
