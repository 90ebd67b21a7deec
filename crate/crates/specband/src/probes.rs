//! Deterministic analytic probe models with known channel reliance.
//!
//! The bucket probes classify an image by which equal-width bucket its
//! designated channel's mean falls into, which makes shuffled-channel
//! accuracies exactly computable by enumeration at small N. They stand in
//! for neural models when exercising the counterfactual and robustness
//! pipelines end to end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrupt::VariantRecord;
use crate::dataset::{DatasetManifest, Split, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::{Channel, CounterfactualPlan, EvalVariant, Prediction, PredictionManifest};
use crate::raster::{load_raster, save_raster, BitDepth, MultiChannelImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Buckets the mean of all RGB samples; blind to NIR.
    RgbMeanBucket,
    /// Buckets the mean of the NIR plane; blind to RGB.
    NirMeanBucket,
    /// Buckets `alpha * mean(NIR) + (1 - alpha) * mean(RGB)`.
    Blend,
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb_mean_bucket" => Ok(ProbeKind::RgbMeanBucket),
            "nir_mean_bucket" => Ok(ProbeKind::NirMeanBucket),
            "blend" => Ok(ProbeKind::Blend),
            other => Err(Error::InvalidParameter(format!("unknown probe kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub kind: ProbeKind,
    pub num_classes: u32,
    /// NIR weight for the blend probe.
    pub blend_alpha: f64,
    /// Per-pixel threshold for segmentation probes.
    pub threshold: u16,
}

impl ProbeModel {
    pub fn new(kind: ProbeKind, num_classes: u32) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidParameter("probe needs at least 2 classes".into()));
        }
        Ok(Self {
            kind,
            num_classes,
            blend_alpha: 0.5,
            threshold: 128,
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        self.blend_alpha = alpha;
        Ok(self)
    }

    pub fn model_id(&self) -> String {
        match self.kind {
            ProbeKind::RgbMeanBucket => "probe_rgb_mean_bucket".to_string(),
            ProbeKind::NirMeanBucket => "probe_nir_mean_bucket".to_string(),
            ProbeKind::Blend => format!("probe_blend_a{:03}", (self.blend_alpha * 100.0).round() as u32),
        }
    }
}

fn mean_of(img: &MultiChannelImage) -> f64 {
    let total: f64 = img.planes().iter().flat_map(|p| p.iter()).map(|&v| f64::from(v)).sum();
    total / (img.planes().len() * img.width() * img.height()) as f64
}

/// Bucket a mean value in [0, 255] into `num_classes` equal-width classes.
pub fn bucket_of(mean: f64, num_classes: u32) -> u32 {
    let class = (mean * f64::from(num_classes) / 256.0).floor();
    (class as i64).clamp(0, i64::from(num_classes) - 1) as u32
}

/// Classify an RGB+NIR pair with the probe's designated-channel bucket rule.
pub fn probe_classify(model: &ProbeModel, rgb: &MultiChannelImage, nir: &MultiChannelImage) -> u32 {
    let value = match model.kind {
        ProbeKind::RgbMeanBucket => mean_of(rgb),
        ProbeKind::NirMeanBucket => mean_of(nir),
        ProbeKind::Blend => {
            model.blend_alpha * mean_of(nir) + (1.0 - model.blend_alpha) * mean_of(rgb)
        }
    };
    bucket_of(value, model.num_classes)
}

/// Per-pixel thresholding probe: class 1 where the designated channel value
/// exceeds the threshold, else 0.
pub fn probe_segment(
    model: &ProbeModel,
    rgb: &MultiChannelImage,
    nir: &MultiChannelImage,
) -> Result<MultiChannelImage> {
    if rgb.width() != nir.width() || rgb.height() != nir.height() {
        return Err(Error::ShapeMismatch(format!(
            "rgb {}x{} vs nir {}x{}",
            rgb.width(),
            rgb.height(),
            nir.width(),
            nir.height()
        )));
    }
    let n = rgb.width() * rgb.height();
    let threshold = f64::from(model.threshold);
    let mask: Vec<u16> = (0..n)
        .map(|i| {
            let rgb_mean = (f64::from(rgb.plane(0)[i])
                + f64::from(rgb.plane(1)[i])
                + f64::from(rgb.plane(2)[i]))
                / 3.0;
            let nir_value = f64::from(nir.plane(0)[i]);
            let designated = match model.kind {
                ProbeKind::RgbMeanBucket => rgb_mean,
                ProbeKind::NirMeanBucket => nir_value,
                ProbeKind::Blend => {
                    model.blend_alpha * nir_value + (1.0 - model.blend_alpha) * rgb_mean
                }
            };
            u16::from(designated > threshold)
        })
        .collect();
    MultiChannelImage::new(
        rgb.width(),
        rgb.height(),
        BitDepth::Eight,
        vec!["mask".into()],
        vec![mask],
    )
}

fn item_order(manifest: &DatasetManifest, split: Split) -> Vec<&crate::dataset::ManifestItem> {
    let mut items: Vec<_> = manifest.items_in(split).collect();
    items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    items
}

fn predict_item(
    model: &ProbeModel,
    task: TaskKind,
    rgb: &MultiChannelImage,
    nir: &MultiChannelImage,
    mask_stem: &str,
    masks_dir: Option<&Path>,
) -> Result<Prediction> {
    match task {
        TaskKind::Classification => Ok(Prediction::Class {
            pred: probe_classify(model, rgb, nir),
        }),
        TaskKind::Segmentation => {
            let dir = masks_dir.ok_or_else(|| {
                Error::InvalidParameter("segmentation probe needs a mask output directory".into())
            })?;
            let mask = probe_segment(model, rgb, nir)?;
            let path = dir.join(format!("{mask_stem}_pred.png"));
            save_raster(&mask, &path)?;
            Ok(Prediction::Mask {
                mask_path: path.to_string_lossy().into_owned(),
            })
        }
    }
}

/// Evaluate the probe on the clean split.
pub fn run_probe_clean(
    model: &ProbeModel,
    manifest: &DatasetManifest,
    split: Split,
    root: &Path,
    seed_id: &str,
    masks_dir: Option<&Path>,
) -> Result<PredictionManifest> {
    let mut out = PredictionManifest::new(model.model_id(), EvalVariant::Clean, seed_id);
    for item in item_order(manifest, split) {
        let rgb = load_raster(root.join(&item.rgb_path))?;
        let nir = load_raster(root.join(&item.nir_path))?;
        let pred = predict_item(model, manifest.task, &rgb, &nir, &item.item_id, masks_dir)?;
        out.records.insert(item.item_id.clone(), pred);
    }
    Ok(out)
}

/// Evaluate the probe under every permutation of a counterfactual plan:
/// item i is paired with the shuffled channel of item sigma(i), exactly as
/// an external model owner would run it.
pub fn run_probe_counterfactual(
    model: &ProbeModel,
    manifest: &DatasetManifest,
    split: Split,
    root: &Path,
    plan: &CounterfactualPlan,
    seed_id: &str,
    masks_dir: Option<&Path>,
) -> Result<Vec<PredictionManifest>> {
    let items = item_order(manifest, split);
    if !plan.item_ids.is_empty() {
        let ours: Vec<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
        let theirs: Vec<&str> = plan.item_ids.iter().map(String::as_str).collect();
        if ours != theirs {
            return Err(Error::Data("plan item ids do not match the evaluated split".into()));
        }
    } else if plan.n_items() != items.len() {
        return Err(Error::Data(format!(
            "plan over {} items, split has {}",
            plan.n_items(),
            items.len()
        )));
    }

    let rgbs: Vec<MultiChannelImage> = items
        .iter()
        .map(|i| load_raster(root.join(&i.rgb_path)))
        .collect::<Result<_>>()?;
    let nirs: Vec<MultiChannelImage> = items
        .iter()
        .map(|i| load_raster(root.join(&i.nir_path)))
        .collect::<Result<_>>()?;

    let mut outputs = Vec::with_capacity(plan.permutations.len());
    for (k, perm) in plan.permutations.iter().enumerate() {
        let mut out = PredictionManifest::new(
            model.model_id(),
            EvalVariant::Counterfactual {
                channel: plan.channel,
                permutation: k,
            },
            seed_id,
        );
        for (i, item) in items.iter().enumerate() {
            let (rgb, nir) = match plan.channel {
                Channel::Nir => (&rgbs[i], &nirs[perm[i]]),
                Channel::Rgb => (&rgbs[perm[i]], &nirs[i]),
            };
            let stem = format!("{}_cf_{}_p{k:03}", item.item_id, plan.channel.name());
            let pred = predict_item(model, manifest.task, rgb, nir, &stem, masks_dir)?;
            out.records.insert(item.item_id.clone(), pred);
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// Evaluate the probe on corrupted variants, one prediction manifest per
/// (kind, severity, target) group.
pub fn run_probe_corrupted(
    model: &ProbeModel,
    manifest: &DatasetManifest,
    split: Split,
    variants: &[VariantRecord],
    variants_root: &Path,
    seed_id: &str,
    masks_dir: Option<&Path>,
) -> Result<Vec<PredictionManifest>> {
    let split_ids: std::collections::BTreeSet<&str> = manifest
        .items_in(split)
        .map(|i| i.item_id.as_str())
        .collect();

    let mut groups: std::collections::BTreeMap<(String, u8, String), Vec<&VariantRecord>> =
        std::collections::BTreeMap::new();
    for record in variants {
        if split_ids.contains(record.item_id.as_str()) {
            groups
                .entry((record.kind.clone(), record.severity, record.target.clone()))
                .or_default()
                .push(record);
        }
    }

    let mut outputs = Vec::with_capacity(groups.len());
    for ((kind, severity, target), records) in groups {
        let variant = EvalVariant::Corrupted {
            kind: kind.parse()?,
            severity,
            target: target.parse()?,
        };
        let mut out = PredictionManifest::new(model.model_id(), variant, seed_id);
        for record in records {
            let rgb = load_raster(variants_root.join(&record.rgb_path))?;
            let nir = load_raster(variants_root.join(&record.nir_path))?;
            let item_id = format!("{}_{}_s{}_{}", record.item_id, kind, severity, target);
            let pred = predict_item(model, manifest.task, &rgb, &nir, &item_id, masks_dir)?;
            out.records.insert(record.item_id.clone(), pred);
        }
        outputs.push(out);
    }
    Ok(outputs)
}
