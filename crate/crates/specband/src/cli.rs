//! The `specband` command-line front end.
//!
//! Subcommands mirror the study workflow: preprocess scenes, build chips or
//! tiles, assign splits, compute stats, corrupt datasets, plan
//! counterfactuals, run probe models, score perceptual reliance, aggregate
//! robustness curves, and render reports.
//!
//! Exit codes: 0 success, 1 data error, 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::corrupt::{
    corrupt_dataset, load_variant_manifest, CorruptionKind, CorruptionSpec, CorruptionTarget,
};
use crate::dataset::{
    assign_splits, chip_scene, compute_channel_stats, filter_rare_classes, tile_scene,
    DatasetManifest, ItemDraft, SceneRecord, Split, SplitWeighting, TaskKind,
};
use crate::error::{Error, Result};
use crate::metrics::{
    baseline_accuracy, evaluate_manifest, make_counterfactual_plan, perceptual_score,
    robustness_curve, AccuracyFunction, Channel, CounterfactualPlan, EvalVariant,
    PredictionManifest, RobustnessRecord, SegAggregation,
};
use crate::probes::{run_probe_clean, run_probe_corrupted, run_probe_counterfactual, ProbeKind, ProbeModel};
use crate::radiometric::preprocess_scene;
use crate::raster::{load_raster, save_raster, ChannelGroup};
use crate::report::{
    config_hash, perceptual_scores_table, render_plot, robustness_table, write_report_tables,
    PlotStyle, ReportTable,
};

#[derive(Parser)]
#[command(name = "specband", version, about = "Multispectral corruption-robustness and channel-reliance toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a 16-bit multiband scene to analysis-ready 8-bit imagery.
    Preprocess(PreprocessArgs),
    /// Cut classification chips around bounding-box annotations.
    Chip(ChipArgs),
    /// Cut non-overlapping tiles from a large scene.
    Tile(TileArgs),
    /// Assign scenes to train/val/test, balanced over metadata.
    Split(SplitArgs),
    /// Per-channel mean/std over one split.
    Stats(StatsArgs),
    /// Generate corrupted variants of a dataset.
    Corrupt(CorruptArgs),
    /// Sample channel-shuffle permutations for perceptual scoring.
    PlanCounterfactual(PlanArgs),
    /// Run a built-in probe model over clean/counterfactual/corrupted data.
    ProbeEval(ProbeEvalArgs),
    /// Compute perceptual scores from prediction manifests.
    Score(ScoreArgs),
    /// Aggregate robustness curves from prediction manifests.
    Robustness(RobustnessArgs),
    /// Render a report CSV as an SVG plot.
    Report(ReportArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// 16-bit multispectral scene (PNG or sidecar directory).
    #[arg(long)]
    ms: PathBuf,
    /// Panchromatic band, required when the config enables pansharpening.
    #[arg(long)]
    pan: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel groups to keep, e.g. "R,G,B;NIR" (default: all channels).
    #[arg(long)]
    groups: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChipArgs {
    /// SceneRecord JSON; its ms_path must point at a preprocessed scene.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pad: f64,
    /// Drop classes with fewer examples than this.
    #[arg(long, default_value_t = 10)]
    min_class_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TileArgs {
    /// Preprocessed scene image (must contain R,G,B,NIR).
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 1024)]
    tile: usize,
    /// Segmentation mask (single-channel, class indices).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Scene id recorded in the item drafts.
    #[arg(long, default_value = "scene")]
    scene_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// JSON list of SceneRecords.
    #[arg(long)]
    scenes: PathBuf,
    /// Comma-separated target fractions, e.g. 0.74,0.13,0.13.
    #[arg(long)]
    fractions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = ["scene_count", "item_count"], default_value = "scene_count")]
    weight_by: String,
    #[arg(long)]
    out: PathBuf,
    /// Item-draft JSON files (from chip/tile) to assemble into a manifest.
    #[arg(long, value_delimiter = ',')]
    items: Vec<PathBuf>,
    #[arg(long, value_parser = ["classification", "segmentation"])]
    task: Option<String>,
    /// Class names, comma separated.
    #[arg(long)]
    label_set: Option<String>,
    /// Class ids excluded from class-averaged metrics.
    #[arg(long, value_delimiter = ',')]
    excluded_class_ids: Vec<u32>,
    /// Write the assembled DatasetManifest here.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// Directory item paths are relative to (default: manifest directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Output JSON path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorruptArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// "all" or a comma-separated subset of corruption names.
    #[arg(long, default_value = "all")]
    kinds: String,
    /// "1..5", a single value, or a comma-separated list.
    #[arg(long, default_value = "1..5")]
    severities: String,
    #[arg(long, default_value = "both")]
    target: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: SPECBAND_THREADS or all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    /// Bind the plan to this manifest's split (sorted by item id).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Plan over n unbound items instead of a manifest.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "nir")]
    channel: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeEvalArgs {
    #[arg(long, value_parser = ["rgb_mean_bucket", "nir_mean_bucket", "blend"])]
    probe: String,
    #[arg(long, default_value_t = 5)]
    classes: u32,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Counterfactual plan to also evaluate.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Variant manifest of corrupted images to also evaluate.
    #[arg(long)]
    variants: Option<PathBuf>,
    #[arg(long, default_value = "s0")]
    seed_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    plan: PathBuf,
    /// Root of the prediction tree (<model>/<variant>/<seed>.jsonl).
    #[arg(long)]
    preds: PathBuf,
    /// Model ids to score (comma separated).
    #[arg(long)]
    models: String,
    #[arg(long, default_value = "s0")]
    seed_id: String,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    models: String,
    /// Seed replicate ids (comma separated).
    #[arg(long, default_value = "s0")]
    seed_ids: String,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_parser = ["severity_lines", "ps_bars"])]
    style: String,
    #[arg(long)]
    out: PathBuf,
}

/// Parse argv and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Chip(a) => cmd_chip(a),
        Command::Tile(a) => cmd_tile(a),
        Command::Split(a) => cmd_split(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Corrupt(a) => cmd_corrupt(a),
        Command::PlanCounterfactual(a) => cmd_plan(a),
        Command::ProbeEval(a) => cmd_probe_eval(a),
        Command::Score(a) => cmd_score(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn manifest_root(manifest_path: &Path, root: &Option<PathBuf>) -> PathBuf {
    root.clone().unwrap_or_else(|| {
        manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    })
}

fn parse_groups(spec: &str) -> Result<Vec<ChannelGroup>> {
    spec.split(';')
        .filter(|g| !g.trim().is_empty())
        .map(|g| {
            let members: Vec<String> = g.split(',').map(|m| m.trim().to_string()).collect();
            ChannelGroup::new(g.trim().to_lowercase(), members)
        })
        .collect()
}

fn parse_kinds(spec: &str) -> Result<Vec<CorruptionKind>> {
    if spec == "all" {
        return Ok(CorruptionKind::ALL.to_vec());
    }
    spec.split(',').map(|k| k.trim().parse()).collect()
}

fn parse_severities(spec: &str) -> Result<Vec<u8>> {
    let parse_one = |s: &str| -> Result<u8> {
        s.trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad severity {s:?}")))
    };
    if let Some((lo, hi)) = spec.split_once("..") {
        let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
        if lo < 1 || hi > 5 || lo > hi {
            return Err(Error::InvalidParameter(format!("severity range {spec:?} outside 1..5")));
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',').map(parse_one).collect()
}

fn parse_fractions(spec: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad fraction {p:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "expected 3 fractions, got {}",
            parts.len()
        )));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn threads_from(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("SPECBAND_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let ms = load_raster(&a.ms)?;
    let pan = a.pan.as_ref().map(load_raster).transpose()?;
    let groups = match &a.groups {
        Some(s) => parse_groups(s)?,
        None => Vec::new(),
    };
    let outcome = preprocess_scene(&ms, pan.as_ref(), &config.radiometric, &groups)?;
    for ch in &outcome.degenerate_channels {
        eprintln!("warning: channel {ch} was constant and collapsed to zero");
    }
    save_raster(&outcome.image, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn load_scene_record(path: &Path) -> Result<SceneRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn rgb_nir_of(img: &crate::raster::MultiChannelImage) -> Result<(crate::raster::MultiChannelImage, crate::raster::MultiChannelImage)> {
    let rgb = img.extract_group(&ChannelGroup::rgb())?;
    let nir = img.extract_group(&ChannelGroup::nir())?;
    Ok((rgb, nir))
}

fn write_drafts(drafts: &[ItemDraft], path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(drafts).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_chip(a: ChipArgs) -> Result<()> {
    let scene = load_scene_record(&a.scene)?;
    let base = a.scene.parent().unwrap_or(Path::new("."));
    let image = load_raster(base.join(&scene.ms_path))?;
    let chips = chip_scene(&image, &scene.annotations, a.pad)?;
    let kept = filter_rare_classes(chips, a.min_class_count);

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut drafts = Vec::with_capacity(kept.len());
    for (i, (chip, label)) in kept.iter().enumerate() {
        let (rgb, nir) = rgb_nir_of(chip)?;
        let rgb_rel = format!("{}_{i:04}_rgb.png", scene.scene_id);
        let nir_rel = format!("{}_{i:04}_nir.png", scene.scene_id);
        save_raster(&rgb, a.out.join(&rgb_rel))?;
        save_raster(&nir, a.out.join(&nir_rel))?;
        drafts.push(ItemDraft {
            item_id: format!("{}_{i:04}", scene.scene_id),
            rgb_path: rgb_rel,
            nir_path: nir_rel,
            label: Some(*label),
            mask_path: None,
            scene_id: scene.scene_id.clone(),
        });
    }
    write_drafts(&drafts, &a.out.join("items.json"))?;
    println!("wrote {} chips to {}", drafts.len(), a.out.display());
    Ok(())
}

fn cmd_tile(a: TileArgs) -> Result<()> {
    let image = load_raster(&a.image)?;
    let mask = a.mask.as_ref().map(load_raster).transpose()?;
    let tiles = tile_scene(&image, a.tile, mask.as_ref())?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut drafts = Vec::with_capacity(tiles.len());
    for (i, (tile, tile_mask)) in tiles.iter().enumerate() {
        let (rgb, nir) = rgb_nir_of(tile)?;
        let rgb_rel = format!("{}_t{i:04}_rgb.png", a.scene_id);
        let nir_rel = format!("{}_t{i:04}_nir.png", a.scene_id);
        save_raster(&rgb, a.out.join(&rgb_rel))?;
        save_raster(&nir, a.out.join(&nir_rel))?;
        let mask_rel = if let Some(m) = tile_mask {
            let rel = format!("{}_t{i:04}_mask.png", a.scene_id);
            save_raster(m, a.out.join(&rel))?;
            Some(rel)
        } else {
            None
        };
        drafts.push(ItemDraft {
            item_id: format!("{}_t{i:04}", a.scene_id),
            rgb_path: rgb_rel,
            nir_path: nir_rel,
            label: None,
            mask_path: mask_rel,
            scene_id: a.scene_id.clone(),
        });
    }
    write_drafts(&drafts, &a.out.join("items.json"))?;
    println!("wrote {} tiles to {}", drafts.len(), a.out.display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.scenes).map_err(|e| Error::io(&a.scenes, e))?;
    let scenes: Vec<SceneRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", a.scenes.display())))?;
    let fractions = parse_fractions(&a.fractions)?;
    let weighting = match a.weight_by.as_str() {
        "item_count" => SplitWeighting::ItemCount,
        _ => SplitWeighting::SceneCount,
    };
    let assignment = assign_splits(&scenes, fractions, a.seed, weighting)?;
    assignment.save(&a.out)?;
    println!(
        "assigned {} scenes; achieved fractions {:.3}/{:.3}/{:.3}",
        scenes.len(),
        assignment.achieved_fractions[0],
        assignment.achieved_fractions[1],
        assignment.achieved_fractions[2]
    );

    if let Some(manifest_out) = &a.manifest_out {
        if a.items.is_empty() {
            return Err(Error::InvalidParameter(
                "--manifest-out needs at least one --items file".into(),
            ));
        }
        let task = match a.task.as_deref() {
            Some("segmentation") => TaskKind::Segmentation,
            Some("classification") => TaskKind::Classification,
            _ => {
                return Err(Error::InvalidParameter(
                    "--manifest-out needs --task".into(),
                ))
            }
        };
        let mut drafts: Vec<ItemDraft> = Vec::new();
        for items_path in &a.items {
            let text = std::fs::read_to_string(items_path).map_err(|e| Error::io(items_path, e))?;
            let mut batch: Vec<ItemDraft> = serde_json::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", items_path.display())))?;
            // item paths are relative to their drafts file
            if let Some(base) = items_path.parent().filter(|p| !p.as_os_str().is_empty()) {
                for draft in &mut batch {
                    draft.rgb_path = base.join(&draft.rgb_path).to_string_lossy().into_owned();
                    draft.nir_path = base.join(&draft.nir_path).to_string_lossy().into_owned();
                    if let Some(mask) = &draft.mask_path {
                        draft.mask_path = Some(base.join(mask).to_string_lossy().into_owned());
                    }
                }
            }
            drafts.extend(batch);
        }
        let label_set: Vec<String> = match &a.label_set {
            Some(s) => s.split(',').map(|l| l.trim().to_string()).collect(),
            None => {
                let max_label = drafts.iter().filter_map(|d| d.label).max().unwrap_or(0);
                (0..=max_label).map(|c| format!("class_{c}")).collect()
            }
        };
        let manifest = crate::dataset::write_manifest(
            drafts,
            &assignment,
            task,
            label_set,
            a.excluded_class_ids.clone(),
            manifest_out,
        )?;
        println!(
            "wrote manifest with {} items to {}",
            manifest.items.len(),
            manifest_out.display()
        );
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split: Split = a.split.parse()?;
    let root = manifest_root(&a.manifest, &a.root);
    let stats = compute_channel_stats(&manifest, split, &root)?;
    let mut text = serde_json::to_string_pretty(&stats).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_corrupt(a: CorruptArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let root = manifest_root(&a.manifest, &a.root);
    let kinds = parse_kinds(&a.kinds)?;
    let severities = parse_severities(&a.severities)?;
    let target: CorruptionTarget = a.target.parse()?;

    let mut specs = Vec::with_capacity(kinds.len() * severities.len());
    for &kind in &kinds {
        for &severity in &severities {
            specs.push(CorruptionSpec::new(kind, severity, target, a.seed)?);
        }
    }
    let report = corrupt_dataset(
        &manifest,
        &specs,
        &root,
        &a.out,
        &config.severity,
        threads_from(a.threads),
    )?;
    println!(
        "wrote {} corrupted pairs to {} (manifest {})",
        report.records.len(),
        a.out.display(),
        report.manifest_path.display()
    );
    if !report.failures.is_empty() {
        for (item, err) in &report.failures {
            eprintln!("failed {item}: {err}");
        }
        return Err(Error::Data(format!("{} items failed", report.failures.len())));
    }
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<()> {
    let channel: Channel = a.channel.parse()?;
    let plan = match (&a.manifest, a.n) {
        (Some(path), None) => {
            let manifest = DatasetManifest::load(path)?;
            let split: Split = a.split.parse()?;
            let mut ids: Vec<String> =
                manifest.items_in(split).map(|i| i.item_id.clone()).collect();
            ids.sort();
            if ids.is_empty() {
                return Err(Error::Data(format!("split {} is empty", split.name())));
            }
            make_counterfactual_plan(ids.len(), channel, a.k, a.seed)?.with_item_ids(ids)?
        }
        (None, Some(n)) => make_counterfactual_plan(n, channel, a.k, a.seed)?,
        _ => {
            return Err(Error::InvalidParameter(
                "provide exactly one of --manifest or --n".into(),
            ))
        }
    };
    plan.save(&a.out)?;
    println!(
        "wrote plan: {} permutations over {} items",
        plan.permutations.len(),
        plan.n_items()
    );
    Ok(())
}

fn cmd_probe_eval(a: ProbeEvalArgs) -> Result<()> {
    let kind: ProbeKind = a.probe.parse()?;
    let model = ProbeModel::new(kind, a.classes)?.with_alpha(a.alpha)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split: Split = a.split.parse()?;
    let root = manifest_root(&a.manifest, &a.root);
    let masks_dir = a.out.join("masks");
    let masks = match manifest.task {
        TaskKind::Segmentation => Some(masks_dir.as_path()),
        TaskKind::Classification => None,
    };

    let mut written = 0usize;
    let clean = run_probe_clean(&model, &manifest, split, &root, &a.seed_id, masks)?;
    clean.save_under(&a.out)?;
    written += 1;

    if let Some(plan_path) = &a.plan {
        let plan = CounterfactualPlan::load(plan_path)?;
        for m in run_probe_counterfactual(&model, &manifest, split, &root, &plan, &a.seed_id, masks)? {
            m.save_under(&a.out)?;
            written += 1;
        }
    }
    if let Some(variants_path) = &a.variants {
        let variants = load_variant_manifest(variants_path)?;
        let variants_root = variants_path.parent().unwrap_or(Path::new("."));
        for m in run_probe_corrupted(&model, &manifest, split, &variants, variants_root, &a.seed_id, masks)? {
            m.save_under(&a.out)?;
            written += 1;
        }
    }
    println!("wrote {written} prediction manifests for {}", model.model_id());
    Ok(())
}

fn acc_fn_for(task: TaskKind) -> AccuracyFunction {
    match task {
        TaskKind::Classification => AccuracyFunction::classification(),
        TaskKind::Segmentation => AccuracyFunction::segmentation(SegAggregation::Pooled),
    }
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split: Split = a.split.parse()?;
    let root = manifest_root(&a.manifest, &a.root);
    let plan = CounterfactualPlan::load(&a.plan)?;
    let acc_fn = acc_fn_for(manifest.task);
    let baseline = baseline_accuracy(&manifest, split, &root)?;

    let mut results = Vec::new();
    for model_id in a.models.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let clean =
            PredictionManifest::load(&a.preds, model_id, &EvalVariant::Clean, &a.seed_id)?;
        let acc_clean = evaluate_manifest(&manifest, &clean, &acc_fn, split, &root)?;
        let mut shuffled = Vec::with_capacity(plan.permutations.len());
        for k in 0..plan.permutations.len() {
            let variant = EvalVariant::Counterfactual {
                channel: plan.channel,
                permutation: k,
            };
            let preds = PredictionManifest::load(&a.preds, model_id, &variant, &a.seed_id)?;
            shuffled.push(evaluate_manifest(&manifest, &preds, &acc_fn, split, &root)?);
        }
        let result = perceptual_score(plan.channel, acc_clean, &shuffled, baseline)?;
        println!(
            "{model_id} {}: ps_model {:.4} ps_task {:.4}",
            plan.channel.name(),
            result.ps_model,
            result.ps_task
        );
        results.push((model_id.to_string(), result));
    }

    let table = perceptual_scores_table(&results, config_hash(&config)?)?;
    let path = write_report_tables(&table, &a.out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_robustness(a: RobustnessArgs) -> Result<()> {
    let config = load_config(&a.config)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split: Split = a.split.parse()?;
    let root = manifest_root(&a.manifest, &a.root);
    let acc_fn = acc_fn_for(manifest.task);
    let seed_ids: Vec<&str> = a.seed_ids.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();

    let mut records = Vec::new();
    for model_id in a.models.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        // discover corrupted variants from the prediction tree
        let model_dir = a.preds.join(model_id);
        let mut variant_names: Vec<String> = std::fs::read_dir(&model_dir)
            .map_err(|e| Error::io(&model_dir, e))?
            .filter_map(|entry| entry.ok())
            .filter(|entry| entry.path().is_dir())
            .filter_map(|entry| entry.file_name().into_string().ok())
            .filter(|name| name.starts_with("corrupt_"))
            .collect();
        variant_names.sort();
        if variant_names.is_empty() {
            return Err(Error::Data(format!("no corrupt_* variants under {}", model_dir.display())));
        }

        let mut targets: Vec<CorruptionTarget> = Vec::new();
        for name in &variant_names {
            if let EvalVariant::Corrupted { target, .. } = EvalVariant::parse_dir_name(name)? {
                if !targets.contains(&target) {
                    targets.push(target);
                }
            }
        }

        for seed_id in &seed_ids {
            let clean = PredictionManifest::load(&a.preds, model_id, &EvalVariant::Clean, seed_id)?;
            let acc_clean = evaluate_manifest(&manifest, &clean, &acc_fn, split, &root)?;
            for &target in &targets {
                records.push(RobustnessRecord {
                    model_id: model_id.to_string(),
                    kind: None,
                    severity: 0,
                    target,
                    seed_id: seed_id.to_string(),
                    accuracy: acc_clean,
                });
            }
            for name in &variant_names {
                let variant = EvalVariant::parse_dir_name(name)?;
                let EvalVariant::Corrupted { kind, severity, target } = variant.clone() else {
                    continue;
                };
                let preds = PredictionManifest::load(&a.preds, model_id, &variant, seed_id)?;
                let acc = evaluate_manifest(&manifest, &preds, &acc_fn, split, &root)?;
                records.push(RobustnessRecord {
                    model_id: model_id.to_string(),
                    kind: Some(kind),
                    severity,
                    target,
                    seed_id: seed_id.to_string(),
                    accuracy: acc,
                });
            }
        }
    }

    let curves = robustness_curve(&records)?;
    let table = robustness_table(&curves, config_hash(&config)?)?;
    let path = write_report_tables(&table, &a.out_dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.table).map_err(|e| Error::io(&a.table, e))?;
    let table = ReportTable::from_csv(&text)?;
    let style: PlotStyle = a.style.parse()?;
    render_plot(&table, style, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_severity_specs() {
        assert_eq!(parse_severities("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_severities("2..3").unwrap(), vec![2, 3]);
        assert_eq!(parse_severities("4").unwrap(), vec![4]);
        assert_eq!(parse_severities("1,3,5").unwrap(), vec![1, 3, 5]);
        assert!(parse_severities("0..5").is_err());
        assert!(parse_severities("x").is_err());
    }

    #[test]
    fn parse_kind_specs() {
        assert_eq!(parse_kinds("all").unwrap().len(), 15);
        let kinds = parse_kinds("fog,snow").unwrap();
        assert_eq!(kinds, vec![CorruptionKind::Fog, CorruptionKind::Snow]);
        assert!(parse_kinds("sharpen").is_err());
    }

    #[test]
    fn parse_group_specs() {
        let groups = parse_groups("R,G,B;NIR").unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].members, vec!["R", "G", "B"]);
        assert_eq!(groups[1].members, vec!["NIR"]);
    }

    #[test]
    fn parse_fraction_specs() {
        assert_eq!(parse_fractions("0.74,0.13,0.13").unwrap(), [0.74, 0.13, 0.13]);
        assert!(parse_fractions("0.5,0.5").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_from(["specband", "no-such-command"]), 2);
        assert_eq!(run_from(["specband"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run_from(["specband", "--help"]), 0);
    }

    #[test]
    fn threads_env_fallback() {
        // flag wins over the environment; env parsed when no flag given
        std::env::set_var("SPECBAND_THREADS", "3");
        assert_eq!(threads_from(Some(7)), Some(7));
        assert_eq!(threads_from(None), Some(3));
        std::env::set_var("SPECBAND_THREADS", "junk");
        assert_eq!(threads_from(None), None);
        std::env::remove_var("SPECBAND_THREADS");
        assert_eq!(threads_from(None), None);
    }

    #[test]
    fn data_errors_exit_1() {
        assert_eq!(
            run_from([
                "specband",
                "stats",
                "--manifest",
                "/nonexistent/manifest.json"
            ]),
            1
        );
    }
}
