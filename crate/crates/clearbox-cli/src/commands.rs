//! Implementation of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clearbox::coco;
use clearbox::distortion::{self, DistortionKind, DistortionSpec, OracleSpec, Severity};
use clearbox::error::{Error, Result};
use clearbox::evaluator::{evaluate, EvalResult};
use clearbox::fusion;
use clearbox::image::io::{read_image, write_png};
use clearbox::orchestrator::ablate::{
    ablate_components, ablate_components_grid, ablate_orderings, default_orderings,
    AblationReport, ComponentToggle,
};
use clearbox::orchestrator::report::{metrics_csv, metrics_table};
use clearbox::orchestrator::{
    render_overlays, run_experiment, DetectorConfig, PipelineConfig,
};
use clearbox::purifier::{run_pipeline, run_pipeline_traced, StageRole, StageSpec};
use clearbox::rng::{fnv1a64, mix64};

use crate::{
    AblateCommand, Cli, Command, DistortKindArg, FuseMethodArg, GlobalArgs, OutputFormat,
    SeverityArg,
};

/// Print to stdout, exiting quietly if the reader has gone away (e.g.
/// output piped into `head`).
fn print_out(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
        std::process::exit(0);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { print_out(&format!("{}\n", format_args!($($arg)*))) };
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Context::new(cli.global)?;
    match cli.command {
        Command::Purify { input, stages, variant, trace } => purify(&ctx, &input, stages, variant, trace),
        Command::Distort { input, kind, severity, angle } => distort(&ctx, &input, kind, severity, angle),
        Command::DetectOracle { annotations, oracle, quality, variant } => {
            detect_oracle(&ctx, &annotations, oracle, quality, &variant)
        }
        Command::Fuse { inputs, annotations, weights, iou_threshold, method } => {
            fuse(&ctx, &inputs, &annotations, weights, iou_threshold, method)
        }
        Command::Eval { detections, annotations } => eval(&ctx, &detections, &annotations),
        Command::Run => run(&ctx),
        Command::Ablate { what } => ablate(&ctx, what),
        Command::Overlay { images, detections, annotations } => {
            overlay(&ctx, &images, &detections, &annotations)
        }
    }
}

struct Context {
    config: Option<PipelineConfig>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    format: OutputFormat,
}

impl Context {
    fn new(global: GlobalArgs) -> Result<Context> {
        let config = match &global.config {
            Some(path) => Some(PipelineConfig::from_file(path)?),
            None => None,
        };
        Ok(Context {
            config,
            seed: global.seed,
            workers: global.workers,
            out: global.out,
            format: global.format,
        })
    }

    fn config(&self) -> Result<&PipelineConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| Error::config("this command needs --config <file>"))
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| self.config.as_ref().map(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn seed(&self) -> u64 {
        self.seed
            .or_else(|| self.config.as_ref().map(|c| c.seed))
            .unwrap_or(0)
    }

    fn print_metrics(&self, label: &str, result: &EvalResult) -> Result<()> {
        match self.format {
            OutputFormat::Json => outln!("{}", serde_json::to_string_pretty(result)?),
            OutputFormat::Csv => {
                print_out(&metrics_csv(&[(label.to_string(), result)]));
            }
            OutputFormat::Table => {
                print_out(&metrics_table(&[(label.to_string(), result)]));
            }
        }
        Ok(())
    }

    fn print_report(&self, report: &AblationReport) -> Result<()> {
        match self.format {
            OutputFormat::Json => outln!("{}", serde_json::to_string_pretty(report)?),
            OutputFormat::Csv => print_out(&report.to_csv()),
            OutputFormat::Table => print_out(&report.to_table()),
        }
        Ok(())
    }
}

/// All image files directly inside a directory, name-sorted; or the file
/// itself.
fn list_images(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Error::data(format!("no such file or directory: {}", input.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("ppm") | Some("pgm") | Some("pnm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::data(format!("no images found in {}", input.display())));
    }
    Ok(files)
}

fn output_name(out_dir: &Path, input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    out_dir.join(format!("{stem}.png"))
}

fn purify(
    ctx: &Context,
    input: &Path,
    stages_file: Option<PathBuf>,
    variant: Option<String>,
    trace: bool,
) -> Result<()> {
    let stages: Vec<StageSpec> = match (stages_file, variant) {
        (Some(path), _) => serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        (None, Some(id)) => {
            let cfg = ctx.config()?;
            cfg.variants
                .iter()
                .find(|v| v.id == id)
                .ok_or_else(|| Error::config(format!("no variant {id:?} in the config")))?
                .stages
                .clone()
        }
        (None, None) => {
            return Err(Error::config("purify needs --stages <json> or --variant <id> with --config"));
        }
    };
    for stage in &stages {
        stage.validate()?;
    }
    let out_dir = ctx.out_dir();
    for path in list_images(input)? {
        let img = read_image(&path)?;
        let out_path = output_name(&out_dir, &path);
        let restored = if trace {
            run_pipeline_traced(&img, &stages, &out_path)?
        } else {
            run_pipeline(&img, &stages)?
        };
        write_png(&restored, &out_path)?;
        outln!("{} -> {}", path.display(), out_path.display());
    }
    Ok(())
}

fn distort(
    ctx: &Context,
    input: &Path,
    kind: Option<DistortKindArg>,
    severity: SeverityArg,
    angle: f64,
) -> Result<()> {
    let severity = match severity {
        SeverityArg::Low => Severity::Low,
        SeverityArg::Medium => Severity::Medium,
        SeverityArg::High => Severity::High,
    };
    let specs: Vec<DistortionSpec> = match kind {
        Some(DistortKindArg::Noise) => {
            vec![DistortionSpec { kind: DistortionKind::noise(severity), seed: 0 }]
        }
        Some(DistortKindArg::Blur) => {
            vec![DistortionSpec { kind: DistortionKind::blur(severity, angle), seed: 0 }]
        }
        Some(DistortKindArg::Downsample) => {
            vec![DistortionSpec { kind: DistortionKind::downsample(severity), seed: 0 }]
        }
        None => ctx
            .config()?
            .distortion
            .clone()
            .ok_or_else(|| Error::config("the config has no distortion list; pass --kind"))?,
    };
    let out_dir = ctx.out_dir();
    let base_seed = ctx.seed();
    for path in list_images(input)? {
        // Each file gets its own stream, keyed by name, so a directory of
        // images is not distorted with identical noise.
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let mut img = read_image(&path)?;
        for spec in &specs {
            let spec = DistortionSpec {
                kind: spec.kind.clone(),
                seed: mix64(base_seed ^ spec.seed ^ fnv1a64(name.as_bytes())),
            };
            img = distortion::distort(&img, &spec)?;
        }
        let out_path = output_name(&out_dir, &path);
        write_png(&img, &out_path)?;
        outln!("{} -> {}", path.display(), out_path.display());
    }
    Ok(())
}

fn detect_oracle(
    ctx: &Context,
    annotations: &Path,
    oracle_file: Option<PathBuf>,
    quality: f64,
    variant: &str,
) -> Result<()> {
    let spec: OracleSpec = match oracle_file {
        Some(path) => serde_json::from_slice(&fs::read(&path)?)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?,
        None => match ctx.config().ok().map(|c| &c.detector) {
            Some(DetectorConfig::Oracle(spec)) => spec.clone(),
            _ => {
                return Err(Error::config(
                    "detect-oracle needs --oracle <json> or a config with an oracle detector",
                ))
            }
        },
    };
    let spec = OracleSpec { seed: spec.seed ^ ctx.seed(), ..spec };
    let dataset = coco::load_annotations(annotations)?;
    let sets: Vec<_> = dataset
        .ground_truth
        .iter()
        .map(|gt| distortion::oracle_detect(gt, variant, 0, quality, &spec))
        .collect::<Result<_>>()?;
    let records = coco::sets_to_records(&sets, &dataset)?;
    let out_path = ctx.out_dir().join(format!("detections_{variant}.json"));
    coco::write_detection_records(&records, &out_path)?;
    outln!("{} detections -> {}", records.len(), out_path.display());
    Ok(())
}

fn fuse(
    ctx: &Context,
    inputs: &[PathBuf],
    annotations: &Path,
    weights: Option<String>,
    iou_threshold: Option<f64>,
    method: FuseMethodArg,
) -> Result<()> {
    let dataset = coco::load_annotations(annotations)?;
    let weights: Vec<f64> = match weights {
        Some(spec) => spec
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bad weight {w:?}")))
            })
            .collect::<Result<_>>()?,
        None => vec![1.0; inputs.len()],
    };
    if weights.len() != inputs.len() {
        return Err(Error::config(format!(
            "{} weights for {} inputs",
            weights.len(),
            inputs.len()
        )));
    }

    let mut fusion_cfg = ctx
        .config
        .as_ref()
        .map(|c| c.fusion.config)
        .unwrap_or_default();
    if let Some(thr) = iou_threshold {
        fusion_cfg.iou_threshold = thr;
    }
    fusion_cfg.validate()?;

    // per_variant[v][i] is variant v's detection set for image i.
    let mut per_variant = Vec::with_capacity(inputs.len());
    for (vi, path) in inputs.iter().enumerate() {
        let records = coco::read_detection_records(path)?;
        per_variant.push(coco::records_to_sets(&records, &dataset, vi as u32, weights[vi])?);
    }

    let mut fused_sets = Vec::with_capacity(dataset.images.len());
    for i in 0..dataset.images.len() {
        let image_sets: Vec<_> = per_variant.iter().map(|v| v[i].clone()).collect();
        let fused = match method {
            FuseMethodArg::Wbf => fusion::wbf(&image_sets, &fusion_cfg)?,
            FuseMethodArg::Nms => {
                let pooled: Vec<_> =
                    image_sets.iter().flat_map(|s| s.detections.iter().cloned()).collect();
                fusion::DetectionSet {
                    image_id: image_sets[0].image_id,
                    detections: fusion::nms(&pooled, fusion_cfg.iou_threshold),
                    weight: 1.0,
                }
            }
        };
        fused_sets.push(fused);
    }
    let records = coco::sets_to_records(&fused_sets, &dataset)?;
    let out_path = ctx.out_dir().join("fused.json");
    coco::write_detection_records(&records, &out_path)?;
    outln!("{} fused detections -> {}", records.len(), out_path.display());
    Ok(())
}

fn eval(ctx: &Context, detections: &Path, annotations: &Path) -> Result<()> {
    let dataset = coco::load_annotations(annotations)?;
    let records = coco::read_detection_records(detections)?;
    let sets = coco::records_to_sets(&records, &dataset, 0, 1.0)?;
    let eval_cfg = ctx.config.as_ref().map(|c| c.eval.clone()).unwrap_or_default();
    let result = evaluate(&sets, &dataset.ground_truth, dataset.num_classes(), &eval_cfg)?;
    ctx.print_metrics("detections", &result)
}

/// Apply --seed/--workers/--out overrides onto the loaded config.
fn effective_config(ctx: &Context) -> Result<PipelineConfig> {
    let mut cfg = ctx.config()?.clone();
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = ctx.workers {
        cfg.workers = Some(workers);
    }
    if let Some(out) = &ctx.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(ctx: &Context) -> Result<()> {
    let cfg = effective_config(ctx)?;
    let output = run_experiment(&cfg)?;
    ctx.print_metrics("fused", &output.result)?;
    eprintln!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}

fn ablate(ctx: &Context, what: AblateCommand) -> Result<()> {
    let cfg = effective_config(ctx)?;
    let report = match what {
        AblateCommand::Components { toggles, grid } => {
            let toggles = match toggles {
                Some(spec) => spec
                    .split(',')
                    .map(|t| ComponentToggle::parse(t.trim()))
                    .collect::<Result<Vec<_>>>()?,
                None => ComponentToggle::default_sequence(),
            };
            if grid {
                ablate_components_grid(&cfg, &toggles)?
            } else {
                ablate_components(&cfg, &toggles)?
            }
        }
        AblateCommand::Orderings { orderings } => {
            let orderings = if orderings.is_empty() {
                default_orderings()
            } else {
                orderings
                    .iter()
                    .map(|spec| {
                        spec.split([',', '>'])
                            .filter(|t| !t.is_empty())
                            .map(|t| StageRole::from_tag(t.trim()))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            ablate_orderings(&cfg, &orderings)?
        }
    };
    ctx.print_report(&report)
}

fn overlay(ctx: &Context, images: &Path, detections: &Path, annotations: &Path) -> Result<()> {
    let dataset = coco::load_annotations(annotations)?;
    let records = coco::read_detection_records(detections)?;
    let sets = coco::records_to_sets(&records, &dataset, 0, 1.0)?;
    let written = render_overlays(images, &sets, &dataset, &ctx.out_dir())?;
    outln!("{} overlays -> {}", written.len(), ctx.out_dir().display());
    Ok(())
}
