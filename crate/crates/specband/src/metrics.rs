//! Accuracy functions, counterfactual channel-shuffle plans, perceptual
//! scores, and corruption-robustness aggregation.
//!
//! The perceptual score of a channel is the relative accuracy drop when
//! that channel's column is shuffled across the dataset: a model that
//! ignores the channel scores exactly zero. The "model normalized" variant
//! divides the drop by clean accuracy; the "task normalized" variant
//! divides by majority-vote accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrupt::{CorruptionKind, CorruptionTarget};
use crate::error::{Error, Result};
use crate::raster::MultiChannelImage;
use crate::rng::{derive_seed, Xoshiro256pp, GROUP_TAG_NIR, GROUP_TAG_RGB};

/// Channel column that a counterfactual plan shuffles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Rgb,
    Nir,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Rgb => "rgb",
            Channel::Nir => "nir",
        }
    }

    fn group_tag(self) -> u64 {
        match self {
            Channel::Rgb => GROUP_TAG_RGB,
            Channel::Nir => GROUP_TAG_NIR,
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Channel::Rgb),
            "nir" => Ok(Channel::Nir),
            other => Err(Error::InvalidParameter(format!("unknown channel {other:?}"))),
        }
    }
}

/// Fraction of exact matches between predictions and labels (0-1 loss).
pub fn zero_one_accuracy<K: Ord + std::fmt::Debug>(
    preds: &BTreeMap<K, u32>,
    labels: &BTreeMap<K, u32>,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Data("zero_one_accuracy over empty set".into()));
    }
    if preds.len() != labels.len() || !labels.keys().all(|k| preds.contains_key(k)) {
        let missing: Vec<String> = labels
            .keys()
            .filter(|k| !preds.contains_key(k))
            .map(|k| format!("{k:?}"))
            .collect();
        return Err(Error::Data(format!(
            "prediction keys do not match labels (missing: {})",
            missing.join(", ")
        )));
    }
    let correct = labels.iter().filter(|(k, &v)| preds[k] == v).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Per-class intersection and union counts for one mask pair.
#[derive(Debug, Clone, Default)]
pub struct IouCounts {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl IouCounts {
    pub fn new(num_classes: usize) -> Self {
        Self {
            intersection: vec![0; num_classes],
            union: vec![0; num_classes],
        }
    }

    pub fn accumulate(&mut self, pred: &MultiChannelImage, label: &MultiChannelImage) -> Result<()> {
        if pred.width() != label.width()
            || pred.height() != label.height()
            || pred.channel_count() != 1
            || label.channel_count() != 1
        {
            return Err(Error::ShapeMismatch(format!(
                "mask shapes {}x{}x{} vs {}x{}x{}",
                pred.width(),
                pred.height(),
                pred.channel_count(),
                label.width(),
                label.height(),
                label.channel_count()
            )));
        }
        let n_classes = self.intersection.len() as u16;
        for (&p, &l) in pred.plane(0).iter().zip(label.plane(0)) {
            if p >= n_classes || l >= n_classes {
                return Err(Error::Data(format!(
                    "mask value {} outside {} classes",
                    p.max(l),
                    n_classes
                )));
            }
            if p == l {
                self.intersection[p as usize] += 1;
                self.union[p as usize] += 1;
            } else {
                self.union[p as usize] += 1;
                self.union[l as usize] += 1;
            }
        }
        Ok(())
    }

    /// Per-class IoU (None where the union is empty) and the mean over
    /// defined, non-excluded classes.
    pub fn finish(&self, excluded_ids: &[u32]) -> (Vec<Option<f64>>, Option<f64>) {
        let per_class: Vec<Option<f64>> = self
            .intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect();
        let included: Vec<f64> = per_class
            .iter()
            .enumerate()
            .filter(|(c, v)| v.is_some() && !excluded_ids.contains(&(*c as u32)))
            .map(|(_, v)| v.unwrap())
            .collect();
        let mean = (!included.is_empty()).then(|| included.iter().sum::<f64>() / included.len() as f64);
        (per_class, mean)
    }
}

/// Intersection-over-union of one mask pair: per-class list plus the mean
/// over defined, non-excluded classes.
pub fn iou(
    pred: &MultiChannelImage,
    label: &MultiChannelImage,
    num_classes: usize,
    excluded_ids: &[u32],
) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    let mut counts = IouCounts::new(num_classes);
    counts.accumulate(pred, label)?;
    Ok(counts.finish(excluded_ids))
}

/// Confusion matrix `M[label][pred]`.
pub fn confusion_matrix<K: Ord + std::fmt::Debug>(
    preds: &BTreeMap<K, u32>,
    labels: &BTreeMap<K, u32>,
    num_classes: usize,
) -> Result<Vec<Vec<u64>>> {
    if labels.is_empty() {
        return Err(Error::Data("confusion_matrix over empty set".into()));
    }
    let mut matrix = vec![vec![0u64; num_classes]; num_classes];
    for (k, &label) in labels {
        let pred = *preds
            .get(k)
            .ok_or_else(|| Error::Data(format!("missing prediction for {k:?}")))?;
        if label as usize >= num_classes || pred as usize >= num_classes {
            return Err(Error::Data(format!(
                "class {} outside {num_classes} classes",
                label.max(pred)
            )));
        }
        matrix[label as usize][pred as usize] += 1;
    }
    Ok(matrix)
}

/// Accuracy of the majority-class baseline; ties break to the lowest id.
pub fn majority_vote_accuracy(labels: impl IntoIterator<Item = u32>) -> Result<f64> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for label in labels {
        *counts.entry(label).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Data("majority_vote_accuracy over empty set".into()));
    }
    // BTreeMap iteration is ascending, so max_by keeps the lowest id on ties
    let best = counts.values().copied().max().unwrap();
    Ok(best as f64 / total as f64)
}

/// The majority class itself (lowest id on ties).
pub fn majority_class(labels: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for label in labels {
        *counts.entry(label).or_default() += 1;
    }
    counts
        .iter()
        .max_by_key(|(id, &c)| (c, std::cmp::Reverse(**id)))
        .map(|(&id, _)| id)
}

/// The K permutations defining a channel's counterfactual datasets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualPlan {
    pub channel: Channel,
    pub seed: u64,
    /// `permutations[k][i]` is sigma(i): item i is paired with the shuffled
    /// channel of item sigma(i).
    pub permutations: Vec<Vec<usize>>,
    /// Item ids in index order, filled when the plan is bound to a split.
    #[serde(default)]
    pub item_ids: Vec<String>,
}

impl CounterfactualPlan {
    pub fn n_items(&self) -> usize {
        self.permutations.first().map_or(self.item_ids.len(), Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, perm) in self.permutations.iter().enumerate() {
            let mut seen = vec![false; perm.len()];
            for &target in perm {
                if target >= perm.len() || seen[target] {
                    return Err(Error::Data(format!("permutation {k} is not a bijection")));
                }
                seen[target] = true;
            }
        }
        if !self.item_ids.is_empty() {
            if let Some(perm) = self.permutations.first() {
                if self.item_ids.len() != perm.len() {
                    return Err(Error::Data(format!(
                        "{} item ids for permutations over {}",
                        self.item_ids.len(),
                        perm.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_item_ids(mut self, ids: Vec<String>) -> Result<Self> {
        self.item_ids = ids;
        self.validate()?;
        Ok(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        text.push('\n');
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let plan: Self = serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Draw `k_permutations` independent uniform permutations of `0..n_items`
/// by seeded Fisher-Yates. Fixed points are permitted (uniform over all
/// permutations). The stream is derived from (seed, channel), so RGB and
/// NIR plans with the same seed differ.
pub fn make_counterfactual_plan(
    n_items: usize,
    channel: Channel,
    k_permutations: usize,
    seed: u64,
) -> Result<CounterfactualPlan> {
    if n_items == 0 {
        return Err(Error::InvalidParameter("plan needs at least one item".into()));
    }
    let mut rng = Xoshiro256pp::from_seed(derive_seed(seed, &[channel.group_tag()]));
    let permutations = (0..k_permutations)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n_items).collect();
            rng.shuffle(&mut perm);
            perm
        })
        .collect();
    Ok(CounterfactualPlan {
        channel,
        seed,
        permutations,
        item_ids: Vec::new(),
    })
}

/// Perceptual score of one channel under one plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptualScoreResult {
    pub channel: Channel,
    pub acc_clean: f64,
    pub baseline_acc: f64,
    pub shuffled_accs: Vec<f64>,
    /// Per-permutation model-normalized scores, for error bars.
    pub per_permutation_ps: Vec<f64>,
    pub ps_model: f64,
    pub ps_task: f64,
}

/// Model- and task-normalized perceptual scores from the clean accuracy
/// and the per-permutation shuffled accuracies.
pub fn perceptual_score(
    channel: Channel,
    acc_clean: f64,
    shuffled_accs: &[f64],
    baseline_acc: f64,
) -> Result<PerceptualScoreResult> {
    if shuffled_accs.is_empty() {
        return Err(Error::Data("perceptual_score needs at least one shuffled accuracy".into()));
    }
    if !(acc_clean > 0.0 && acc_clean <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "model-normalized score undefined for clean accuracy {acc_clean}"
        )));
    }
    if !(baseline_acc > 0.0 && baseline_acc <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "task-normalized score undefined for baseline accuracy {baseline_acc}"
        )));
    }
    // average the per-permutation drops rather than the raw accuracies, so
    // a channel-blind model (every shuffled acc identical to clean) scores
    // exactly zero with no float residue; summing in sorted order makes the
    // result exactly invariant to the order of shuffled_accs
    let mut drops: Vec<f64> = shuffled_accs.iter().map(|&s| acc_clean - s).collect();
    drops.sort_by(f64::total_cmp);
    let mean_drop = drops.iter().sum::<f64>() / drops.len() as f64;
    let per_permutation_ps = shuffled_accs
        .iter()
        .map(|&s| (acc_clean - s) / acc_clean)
        .collect();
    Ok(PerceptualScoreResult {
        channel,
        acc_clean,
        baseline_acc,
        shuffled_accs: shuffled_accs.to_vec(),
        per_permutation_ps,
        ps_model: mean_drop / acc_clean,
        ps_task: mean_drop / baseline_acc,
    })
}

/// Evaluation variant a prediction manifest belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum EvalVariant {
    Clean,
    Counterfactual { channel: Channel, permutation: usize },
    Corrupted {
        kind: CorruptionKind,
        severity: u8,
        target: CorruptionTarget,
    },
}

impl EvalVariant {
    /// Directory-name encoding used in `<model_id>/<variant>/<seed_id>.jsonl`.
    pub fn dir_name(&self) -> String {
        match self {
            EvalVariant::Clean => "clean".to_string(),
            EvalVariant::Counterfactual { channel, permutation } => {
                format!("cf_{}_p{permutation:03}", channel.name())
            }
            EvalVariant::Corrupted { kind, severity, target } => {
                format!("corrupt_{}_s{severity}_{}", kind.name(), target.name())
            }
        }
    }

    pub fn parse_dir_name(name: &str) -> Result<Self> {
        if name == "clean" {
            return Ok(EvalVariant::Clean);
        }
        if let Some(rest) = name.strip_prefix("cf_") {
            let (channel, perm) = rest
                .rsplit_once("_p")
                .ok_or_else(|| Error::Data(format!("bad counterfactual variant {name:?}")))?;
            return Ok(EvalVariant::Counterfactual {
                channel: channel.parse()?,
                permutation: perm
                    .parse()
                    .map_err(|_| Error::Data(format!("bad permutation index in {name:?}")))?,
            });
        }
        if let Some(rest) = name.strip_prefix("corrupt_") {
            let (kind_sev, target) = rest
                .rsplit_once('_')
                .ok_or_else(|| Error::Data(format!("bad corrupted variant {name:?}")))?;
            let (kind, sev) = kind_sev
                .rsplit_once("_s")
                .ok_or_else(|| Error::Data(format!("bad corrupted variant {name:?}")))?;
            return Ok(EvalVariant::Corrupted {
                kind: kind.parse()?,
                severity: sev
                    .parse()
                    .map_err(|_| Error::Data(format!("bad severity in {name:?}")))?,
                target: target.parse()?,
            });
        }
        Err(Error::Data(format!("unknown variant directory {name:?}")))
    }
}

/// One model output: a class id or a predicted-mask path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Class { pred: u32 },
    Mask { mask_path: String },
}

/// External model outputs for one (model, variant, seed) evaluation. The
/// only interface between models and the metrics engine.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionManifest {
    pub model_id: String,
    pub variant: EvalVariant,
    pub seed_id: String,
    pub records: BTreeMap<String, Prediction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredLine {
    item_id: String,
    #[serde(flatten)]
    prediction: Prediction,
}

impl PredictionManifest {
    pub fn new(model_id: impl Into<String>, variant: EvalVariant, seed_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            variant,
            seed_id: seed_id.into(),
            records: BTreeMap::new(),
        }
    }

    /// Write as JSON lines under `root/<model_id>/<variant>/<seed_id>.jsonl`.
    pub fn save_under(&self, root: &Path) -> Result<std::path::PathBuf> {
        let dir = root.join(&self.model_id).join(self.variant.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.jsonl", self.seed_id));
        let mut out = String::new();
        for (item_id, prediction) in &self.records {
            let line = PredLine {
                item_id: item_id.clone(),
                prediction: prediction.clone(),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Data(e.to_string()))?);
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Read one manifest from `root/<model_id>/<variant dir>/<seed_id>.jsonl`.
    pub fn load(root: &Path, model_id: &str, variant: &EvalVariant, seed_id: &str) -> Result<Self> {
        let path = root
            .join(model_id)
            .join(variant.dir_name())
            .join(format!("{seed_id}.jsonl"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut records = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parsed: PredLine =
                serde_json::from_str(line).map_err(|e| Error::Data(format!("{e}: {line}")))?;
            if records.insert(parsed.item_id.clone(), parsed.prediction).is_some() {
                return Err(Error::Data(format!("duplicate prediction for {:?}", parsed.item_id)));
            }
        }
        Ok(Self {
            model_id: model_id.to_string(),
            variant: variant.clone(),
            seed_id: seed_id.to_string(),
            records,
        })
    }
}

/// How segmentation accuracies aggregate across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegAggregation {
    /// Pool intersections and unions over all items, then divide.
    #[default]
    Pooled,
    /// Mean over items of the per-item mean IoU.
    PerItemMean,
}

/// Task-appropriate accuracy over a prediction manifest.
#[derive(Debug, Clone, Copy)]
pub struct AccuracyFunction {
    pub task: crate::dataset::TaskKind,
    pub seg_aggregation: SegAggregation,
}

impl AccuracyFunction {
    pub fn classification() -> Self {
        Self {
            task: crate::dataset::TaskKind::Classification,
            seg_aggregation: SegAggregation::default(),
        }
    }

    pub fn segmentation(agg: SegAggregation) -> Self {
        Self {
            task: crate::dataset::TaskKind::Segmentation,
            seg_aggregation: agg,
        }
    }
}

/// Dataset accuracy of a prediction manifest over one split.
///
/// Classification uses 0-1 accuracy against manifest labels. Segmentation
/// loads label and predicted masks relative to `root` and aggregates IoU
/// per `acc_fn.seg_aggregation`.
pub fn evaluate_manifest(
    dataset: &crate::dataset::DatasetManifest,
    predictions: &PredictionManifest,
    acc_fn: &AccuracyFunction,
    split: crate::dataset::Split,
    root: &Path,
) -> Result<f64> {
    let items: Vec<_> = dataset.items_in(split).collect();
    if items.is_empty() {
        return Err(Error::Data(format!("split {} is empty", split.name())));
    }
    let missing: Vec<&str> = items
        .iter()
        .filter(|i| !predictions.records.contains_key(&i.item_id))
        .map(|i| i.item_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing predictions for: {}",
            missing.join(", ")
        )));
    }

    match acc_fn.task {
        crate::dataset::TaskKind::Classification => {
            let mut labels = BTreeMap::new();
            let mut preds = BTreeMap::new();
            for item in &items {
                let label = item.label.ok_or_else(|| {
                    Error::Data(format!("item {:?} has no class label", item.item_id))
                })?;
                let pred = match &predictions.records[&item.item_id] {
                    Prediction::Class { pred } => *pred,
                    Prediction::Mask { .. } => {
                        return Err(Error::Data(format!(
                            "mask prediction for classification item {:?}",
                            item.item_id
                        )))
                    }
                };
                labels.insert(item.item_id.clone(), label);
                preds.insert(item.item_id.clone(), pred);
            }
            zero_one_accuracy(&preds, &labels)
        }
        crate::dataset::TaskKind::Segmentation => {
            let num_classes = dataset.label_set.len();
            let mut pooled = IouCounts::new(num_classes);
            let mut per_item = Vec::with_capacity(items.len());
            for item in &items {
                let label_path = item.mask_path.as_ref().ok_or_else(|| {
                    Error::Data(format!("item {:?} has no mask path", item.item_id))
                })?;
                let pred_path = match &predictions.records[&item.item_id] {
                    Prediction::Mask { mask_path } => mask_path,
                    Prediction::Class { .. } => {
                        return Err(Error::Data(format!(
                            "class prediction for segmentation item {:?}",
                            item.item_id
                        )))
                    }
                };
                let label = crate::raster::load_raster(root.join(label_path))?;
                let pred = crate::raster::load_raster(root.join(pred_path))?;
                match acc_fn.seg_aggregation {
                    SegAggregation::Pooled => pooled.accumulate(&pred, &label)?,
                    SegAggregation::PerItemMean => {
                        let (_, mean) = iou(&pred, &label, num_classes, &dataset.excluded_class_ids)?;
                        per_item.push(mean.ok_or_else(|| {
                            Error::Data(format!("item {:?} has no scorable classes", item.item_id))
                        })?);
                    }
                }
            }
            match acc_fn.seg_aggregation {
                SegAggregation::Pooled => pooled
                    .finish(&dataset.excluded_class_ids)
                    .1
                    .ok_or_else(|| Error::Data("no scorable classes in split".into())),
                SegAggregation::PerItemMean => {
                    Ok(per_item.iter().sum::<f64>() / per_item.len() as f64)
                }
            }
        }
    }
}

/// Accuracy of the naive majority baseline for the task: majority-vote
/// class frequency for classification; for segmentation, the pooled IoU of
/// predicting the majority pixel class everywhere.
pub fn baseline_accuracy(
    dataset: &crate::dataset::DatasetManifest,
    split: crate::dataset::Split,
    root: &Path,
) -> Result<f64> {
    match dataset.task {
        crate::dataset::TaskKind::Classification => {
            let labels: Vec<u32> = dataset
                .items_in(split)
                .map(|i| {
                    i.label
                        .ok_or_else(|| Error::Data(format!("item {:?} has no label", i.item_id)))
                })
                .collect::<Result<_>>()?;
            majority_vote_accuracy(labels)
        }
        crate::dataset::TaskKind::Segmentation => {
            let num_classes = dataset.label_set.len();
            let mut pixel_counts = vec![0u64; num_classes];
            for item in dataset.items_in(split) {
                let path = item.mask_path.as_ref().ok_or_else(|| {
                    Error::Data(format!("item {:?} has no mask path", item.item_id))
                })?;
                let mask = crate::raster::load_raster(root.join(path))?;
                for &v in mask.plane(0) {
                    if (v as usize) < num_classes {
                        pixel_counts[v as usize] += 1;
                    } else {
                        return Err(Error::Data(format!(
                            "mask value {v} outside {num_classes} classes"
                        )));
                    }
                }
            }
            let total: u64 = pixel_counts.iter().sum();
            if total == 0 {
                return Err(Error::Data(format!("split {} is empty", split.name())));
            }
            let majority = pixel_counts
                .iter()
                .enumerate()
                .max_by_key(|(c, &n)| (n, std::cmp::Reverse(*c)))
                .map(|(c, _)| c)
                .unwrap();
            // constant-majority prediction: IoU_m = freq_m, all others 0
            let mut counts = IouCounts::new(num_classes);
            counts.intersection[majority] = pixel_counts[majority];
            for (c, &n) in pixel_counts.iter().enumerate() {
                counts.union[c] = if c == majority { total } else { n };
            }
            counts
                .finish(&dataset.excluded_class_ids)
                .1
                .ok_or_else(|| Error::Data("no scorable classes for baseline".into()))
        }
    }
}

/// One accuracy measurement of one model under one corruption setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    pub model_id: String,
    /// None for the clean (severity 0) anchor.
    pub kind: Option<CorruptionKind>,
    /// 0 = clean, 1..=5 = corruption severities.
    pub severity: u8,
    pub target: CorruptionTarget,
    pub seed_id: String,
    pub accuracy: f64,
}

/// One point of a severity curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub severity: u8,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Severity curves grouped by (model, target): per severity, accuracy is
/// averaged over kinds within each seed replicate, then over seeds, with a
/// 95% normal-approximation CI across seeds (zero width for one seed).
pub fn robustness_curve(
    records: &[RobustnessRecord],
) -> Result<BTreeMap<(String, CorruptionTarget), Vec<CurvePoint>>> {
    if records.is_empty() {
        return Err(Error::Data("robustness_curve over empty records".into()));
    }
    for r in records {
        if !(0.0..=1.0).contains(&r.accuracy) {
            return Err(Error::Data(format!("accuracy {} outside [0, 1]", r.accuracy)));
        }
        if r.severity > 5 {
            return Err(Error::Data(format!("severity {} outside 0..=5", r.severity)));
        }
        if (r.severity == 0) != r.kind.is_none() {
            return Err(Error::Data(
                "severity 0 must have no kind; severities 1..=5 must have one".into(),
            ));
        }
    }

    type GroupKey = (String, CorruptionTarget);
    let mut groups: BTreeMap<(GroupKey, u8), BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in records {
        groups
            .entry(((r.model_id.clone(), r.target), r.severity))
            .or_default()
            .entry(&r.seed_id)
            .or_default()
            .push(r.accuracy);
    }

    // consistency: within a (group, severity), every seed must carry the
    // same number of kind measurements
    for ((group, severity), seeds) in &groups {
        let counts: BTreeSet<usize> = seeds.values().map(Vec::len).collect();
        if counts.len() > 1 {
            return Err(Error::Data(format!(
                "inconsistent record keys for {group:?} severity {severity}: per-seed counts {counts:?}"
            )));
        }
    }

    let mut curves: BTreeMap<GroupKey, Vec<CurvePoint>> = BTreeMap::new();
    for ((group, severity), seeds) in groups {
        let seed_means: Vec<f64> = seeds
            .values()
            .map(|accs| accs.iter().sum::<f64>() / accs.len() as f64)
            .collect();
        let n = seed_means.len() as f64;
        let mean = seed_means.iter().sum::<f64>() / n;
        let half_width = if seed_means.len() > 1 {
            let var = seed_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            1.96 * var.sqrt() / n.sqrt()
        } else {
            0.0
        };
        curves.entry(group).or_default().push(CurvePoint {
            severity,
            mean,
            ci_low: mean - half_width,
            ci_high: mean + half_width,
        });
    }
    for points in curves.values_mut() {
        points.sort_by_key(|p| p.severity);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BitDepth;

    fn mask(values: Vec<u16>, w: usize, h: usize) -> MultiChannelImage {
        MultiChannelImage::new(w, h, BitDepth::Eight, vec!["mask".into()], vec![values]).unwrap()
    }

    fn to_map(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn zero_one_basics() {
        let labels = to_map(&[("a", 0), ("b", 1), ("c", 2), ("d", 3)]);
        assert_eq!(zero_one_accuracy(&labels, &labels).unwrap(), 1.0);
        let wrong = to_map(&[("a", 1), ("b", 2), ("c", 3), ("d", 0)]);
        assert_eq!(zero_one_accuracy(&wrong, &labels).unwrap(), 0.0);
        let preds = to_map(&[("a", 0), ("b", 1), ("c", 2), ("d", 0)]);
        assert_eq!(zero_one_accuracy(&preds, &labels).unwrap(), 0.75);
    }

    #[test]
    fn zero_one_rejects_key_mismatch_and_empty() {
        let labels = to_map(&[("a", 0)]);
        let preds = to_map(&[("b", 0)]);
        assert!(zero_one_accuracy(&preds, &labels).is_err());
        let empty: BTreeMap<String, u32> = BTreeMap::new();
        assert!(zero_one_accuracy(&empty, &empty).is_err());
    }

    #[test]
    fn iou_identical_masks() {
        let m = mask(vec![0, 1, 2, 1], 2, 2);
        let (per_class, mean) = iou(&m, &m, 3, &[]).unwrap();
        for v in per_class.iter().flatten() {
            assert_eq!(*v, 1.0);
        }
        assert_eq!(mean.unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint_masks() {
        let a = mask(vec![0, 0, 0, 0], 2, 2);
        let b = mask(vec![1, 1, 1, 1], 2, 2);
        let (per_class, mean) = iou(&a, &b, 2, &[]).unwrap();
        assert_eq!(per_class[0], Some(0.0));
        assert_eq!(per_class[1], Some(0.0));
        assert_eq!(mean.unwrap(), 0.0);
    }

    #[test]
    fn iou_hand_computed_2x2() {
        // pred [0,0;1,1] vs label [0,1;1,1]: class0 1/2, class1 2/3
        let pred = mask(vec![0, 0, 1, 1], 2, 2);
        let label = mask(vec![0, 1, 1, 1], 2, 2);
        let (per_class, mean) = iou(&pred, &label, 2, &[]).unwrap();
        assert!((per_class[0].unwrap() - 0.5).abs() < 1e-15);
        assert!((per_class[1].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((mean.unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn iou_excludes_classes_from_mean() {
        let pred = mask(vec![0, 0, 1, 1], 2, 2);
        let label = mask(vec![0, 1, 1, 1], 2, 2);
        let (_, mean) = iou(&pred, &label, 2, &[0]).unwrap();
        assert!((mean.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_undefined_class_not_in_mean() {
        let pred = mask(vec![0, 0, 0, 0], 2, 2);
        let label = mask(vec![0, 0, 0, 0], 2, 2);
        let (per_class, mean) = iou(&pred, &label, 3, &[]).unwrap();
        assert_eq!(per_class[1], None);
        assert_eq!(per_class[2], None);
        assert_eq!(mean.unwrap(), 1.0);
    }

    #[test]
    fn iou_rejects_out_of_range() {
        let pred = mask(vec![5, 0, 0, 0], 2, 2);
        let label = mask(vec![0, 0, 0, 0], 2, 2);
        assert!(iou(&pred, &label, 2, &[]).is_err());
    }

    #[test]
    fn confusion_matrix_diagonal_and_trace() {
        let labels = to_map(&[("a", 0), ("b", 1), ("c", 2), ("d", 1)]);
        let m = confusion_matrix(&labels, &labels, 3).unwrap();
        assert_eq!(m[0][0], 1);
        assert_eq!(m[1][1], 2);
        assert_eq!(m[2][2], 1);
        let preds = to_map(&[("a", 0), ("b", 2), ("c", 2), ("d", 1)]);
        let m = confusion_matrix(&preds, &labels, 3).unwrap();
        let trace: u64 = (0..3).map(|i| m[i][i]).sum();
        let total: u64 = m.iter().flatten().sum();
        let acc = zero_one_accuracy(&preds, &labels).unwrap();
        assert!((trace as f64 / total as f64 - acc).abs() < 1e-15);
        // row sums = per-class label counts
        assert_eq!(m[1].iter().sum::<u64>(), 2);
    }

    #[test]
    fn confusion_single_item() {
        let labels = to_map(&[("x", 2)]);
        let preds = to_map(&[("x", 0)]);
        let m = confusion_matrix(&preds, &labels, 3).unwrap();
        assert_eq!(m[2][0], 1);
        assert_eq!(m.iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn majority_vote_cases() {
        assert_eq!(majority_vote_accuracy([3, 3, 3]).unwrap(), 1.0);
        assert!((majority_vote_accuracy([0, 0, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let uniform: Vec<u32> = (0..100).map(|i| i % 5).collect();
        assert!((majority_vote_accuracy(uniform).unwrap() - 0.2).abs() < 1e-15);
        assert!(majority_vote_accuracy([]).is_err());
        // tie goes to the lowest id
        assert_eq!(majority_class([1, 1, 0, 0]), Some(0));
    }

    #[test]
    fn plan_golden_matches_reference_prng() {
        // frozen from an independent implementation of SplitMix64 +
        // xoshiro256++ + rejection-bounded Fisher-Yates
        let plan = make_counterfactual_plan(4, Channel::Nir, 2, 7).unwrap();
        assert_eq!(plan.permutations, vec![vec![0, 3, 1, 2], vec![3, 1, 0, 2]]);
        let plan = make_counterfactual_plan(4, Channel::Rgb, 2, 7).unwrap();
        assert_eq!(plan.permutations, vec![vec![2, 3, 0, 1], vec![2, 0, 1, 3]]);
    }

    #[test]
    fn plan_edge_cases() {
        let empty = make_counterfactual_plan(5, Channel::Nir, 0, 1).unwrap();
        assert!(empty.permutations.is_empty());
        let single = make_counterfactual_plan(1, Channel::Nir, 4, 1).unwrap();
        for perm in &single.permutations {
            assert_eq!(perm, &vec![0]);
        }
        assert!(make_counterfactual_plan(0, Channel::Nir, 1, 1).is_err());
    }

    #[test]
    fn plan_permutations_are_bijections() {
        let plan = make_counterfactual_plan(17, Channel::Rgb, 25, 99).unwrap();
        plan.validate().unwrap();
        for perm in &plan.permutations {
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..17).collect::<Vec<_>>());
        }
    }

    #[test]
    fn perceptual_score_arithmetic() {
        let r = perceptual_score(Channel::Nir, 0.92, &[0.69, 0.69, 0.69], 0.2).unwrap();
        assert!((r.ps_model - 0.25).abs() < 1e-12);
        assert!((r.ps_task - 1.15).abs() < 1e-12);
    }

    #[test]
    fn perceptual_score_channel_blind_is_zero() {
        let r = perceptual_score(Channel::Nir, 0.8, &[0.8; 10], 0.5).unwrap();
        assert_eq!(r.ps_model, 0.0);
        assert_eq!(r.ps_task, 0.0);
    }

    #[test]
    fn perceptual_score_order_invariant_and_bounded() {
        let a = perceptual_score(Channel::Rgb, 0.9, &[0.1, 0.5, 0.7], 0.3).unwrap();
        let b = perceptual_score(Channel::Rgb, 0.9, &[0.7, 0.1, 0.5], 0.3).unwrap();
        assert_eq!(a.ps_model, b.ps_model);
        assert!(a.ps_model <= 1.0);
        let max = perceptual_score(Channel::Rgb, 0.9, &[0.0, 0.0], 0.3).unwrap();
        assert_eq!(max.ps_model, 1.0);
    }

    #[test]
    fn perceptual_score_rejects_degenerate_inputs() {
        assert!(perceptual_score(Channel::Nir, 0.0, &[0.5], 0.5).is_err());
        assert!(perceptual_score(Channel::Nir, 0.5, &[0.5], 0.0).is_err());
        assert!(perceptual_score(Channel::Nir, 0.5, &[], 0.5).is_err());
    }

    #[test]
    fn variant_dir_names_roundtrip() {
        let variants = [
            EvalVariant::Clean,
            EvalVariant::Counterfactual { channel: Channel::Nir, permutation: 7 },
            EvalVariant::Corrupted {
                kind: CorruptionKind::GaussianNoise,
                severity: 3,
                target: CorruptionTarget::Both,
            },
        ];
        for v in variants {
            assert_eq!(EvalVariant::parse_dir_name(&v.dir_name()).unwrap(), v);
        }
    }

    fn seg_fixture(
        dir: &Path,
        pairs: &[(Vec<u16>, Vec<u16>)],
    ) -> (crate::dataset::DatasetManifest, PredictionManifest) {
        let mut items = Vec::new();
        let mut preds = PredictionManifest::new("m", EvalVariant::Clean, "s0");
        for (i, (pred_values, label_values)) in pairs.iter().enumerate() {
            let label = mask(label_values.clone(), 2, 2);
            let pred = mask(pred_values.clone(), 2, 2);
            let label_rel = format!("i{i}_label.png");
            let pred_rel = format!("i{i}_pred.png");
            crate::raster::save_raster(&label, dir.join(&label_rel)).unwrap();
            crate::raster::save_raster(&pred, dir.join(&pred_rel)).unwrap();
            items.push(crate::dataset::ManifestItem {
                item_id: format!("i{i}"),
                rgb_path: String::new(),
                nir_path: String::new(),
                label: None,
                mask_path: Some(label_rel),
                scene_id: "s".into(),
                split: crate::dataset::Split::Test,
            });
            preds
                .records
                .insert(format!("i{i}"), Prediction::Mask { mask_path: pred_rel });
        }
        let manifest = crate::dataset::DatasetManifest {
            task: crate::dataset::TaskKind::Segmentation,
            label_set: vec!["bg".into(), "fg".into()],
            excluded_class_ids: vec![],
            items,
        };
        (manifest, preds)
    }

    #[test]
    fn evaluate_segmentation_pooled_matches_hand_count() {
        let dir = tempfile::tempdir().unwrap();
        // item A: pred [0,0,1,1] label [0,1,1,1]; item B: pred [1,1,0,0] label [1,1,1,0]
        let pairs = vec![
            (vec![0u16, 0, 1, 1], vec![0u16, 1, 1, 1]),
            (vec![1u16, 1, 0, 0], vec![1u16, 1, 1, 0]),
        ];
        let (manifest, preds) = seg_fixture(dir.path(), &pairs);
        let acc_fn = AccuracyFunction::segmentation(SegAggregation::Pooled);
        let pooled =
            evaluate_manifest(&manifest, &preds, &acc_fn, crate::dataset::Split::Test, dir.path())
                .unwrap();
        // pooled counts over both items:
        //   class0: inter = A(0,0)=1 + B(3)=1 = 2; union = A{0,1} + B{2,3} = 4 -> 1/2
        //   class1: inter = A{2,3}=2 + B{0,1}=2 = 4; union = A{1,2,3} + B{0,1,2} = 6 -> 2/3
        let expected = (0.5 + 2.0 / 3.0) / 2.0;
        assert!((pooled - expected).abs() < 1e-15, "pooled {pooled} vs {expected}");

        // per-item averaging differs: item scores are (1/2+2/3)/2 each
        let acc_fn = AccuracyFunction::segmentation(SegAggregation::PerItemMean);
        let per_item =
            evaluate_manifest(&manifest, &preds, &acc_fn, crate::dataset::Split::Test, dir.path())
                .unwrap();
        assert!((per_item - (7.0 / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn evaluate_manifest_lists_missing_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![(vec![0u16, 0, 1, 1], vec![0u16, 1, 1, 1])];
        let (manifest, mut preds) = seg_fixture(dir.path(), &pairs);
        preds.records.clear();
        let acc_fn = AccuracyFunction::segmentation(SegAggregation::Pooled);
        let err =
            evaluate_manifest(&manifest, &preds, &acc_fn, crate::dataset::Split::Test, dir.path())
                .unwrap_err();
        assert!(err.to_string().contains("i0"), "{err}");
    }

    #[test]
    fn evaluate_classification_half_correct() {
        let manifest = crate::dataset::DatasetManifest {
            task: crate::dataset::TaskKind::Classification,
            label_set: vec!["a".into(), "b".into()],
            excluded_class_ids: vec![],
            items: (0..4)
                .map(|i| crate::dataset::ManifestItem {
                    item_id: format!("i{i}"),
                    rgb_path: String::new(),
                    nir_path: String::new(),
                    label: Some(0),
                    mask_path: None,
                    scene_id: "s".into(),
                    split: crate::dataset::Split::Test,
                })
                .collect(),
        };
        let mut preds = PredictionManifest::new("m", EvalVariant::Clean, "s0");
        for i in 0..4 {
            preds.records.insert(
                format!("i{i}"),
                Prediction::Class { pred: (i % 2) as u32 },
            );
        }
        let acc = evaluate_manifest(
            &manifest,
            &preds,
            &AccuracyFunction::classification(),
            crate::dataset::Split::Test,
            Path::new("."),
        )
        .unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn baseline_accuracy_majority_and_constant_mask() {
        let dir = tempfile::tempdir().unwrap();
        // segmentation: labels with 5 of class 1 and 3 of class 0 across two
        // items; constant-majority prediction scores IoU_1 = 5/8, IoU_0 = 0
        let pairs = vec![
            (vec![0u16, 0, 0, 0], vec![1u16, 1, 1, 0]),
            (vec![0u16, 0, 0, 0], vec![1u16, 1, 0, 0]),
        ];
        let (manifest, _) = seg_fixture(dir.path(), &pairs);
        let baseline =
            baseline_accuracy(&manifest, crate::dataset::Split::Test, dir.path()).unwrap();
        let expected = (5.0 / 8.0 + 0.0) / 2.0;
        assert!((baseline - expected).abs() < 1e-15, "{baseline} vs {expected}");
    }

    #[test]
    fn robustness_curve_single_seed_zero_width() {
        let records: Vec<RobustnessRecord> = (0..=5u8)
            .map(|severity| RobustnessRecord {
                model_id: "m".into(),
                kind: (severity > 0).then_some(CorruptionKind::Fog),
                severity,
                target: CorruptionTarget::Both,
                seed_id: "s0".into(),
                accuracy: 1.0 - 0.1 * f64::from(severity),
            })
            .collect();
        let curves = robustness_curve(&records).unwrap();
        let curve = &curves[&("m".to_string(), CorruptionTarget::Both)];
        assert_eq!(curve.len(), 6);
        assert_eq!(curve[0].severity, 0);
        for p in curve {
            assert_eq!(p.ci_low, p.mean);
            assert_eq!(p.ci_high, p.mean);
        }
    }

    #[test]
    fn robustness_curve_ci_formula() {
        // seeds {0.8, 0.9}: mean 0.85, half-width 1.96*0.070710/sqrt(2)
        let mk = |seed: &str, acc: f64| RobustnessRecord {
            model_id: "m".into(),
            kind: Some(CorruptionKind::Fog),
            severity: 2,
            target: CorruptionTarget::Rgb,
            seed_id: seed.into(),
            accuracy: acc,
        };
        let curves = robustness_curve(&[mk("a", 0.8), mk("b", 0.9)]).unwrap();
        let point = &curves[&("m".to_string(), CorruptionTarget::Rgb)][0];
        assert!((point.mean - 0.85).abs() < 1e-12);
        let half = point.ci_high - point.mean;
        assert!((half - 0.098).abs() < 5e-4, "half width {half}");
    }

    #[test]
    fn robustness_curve_rejects_inconsistent_seeds() {
        let mk = |seed: &str, kind: CorruptionKind| RobustnessRecord {
            model_id: "m".into(),
            kind: Some(kind),
            severity: 1,
            target: CorruptionTarget::Rgb,
            seed_id: seed.into(),
            accuracy: 0.5,
        };
        let records = vec![
            mk("a", CorruptionKind::Fog),
            mk("a", CorruptionKind::Snow),
            mk("b", CorruptionKind::Fog),
        ];
        assert!(robustness_curve(&records).is_err());
    }

    #[test]
    fn robustness_curve_rejects_bad_records() {
        let bad = RobustnessRecord {
            model_id: "m".into(),
            kind: None,
            severity: 3, // severity > 0 must carry a kind
            target: CorruptionTarget::Rgb,
            seed_id: "a".into(),
            accuracy: 0.5,
        };
        assert!(robustness_curve(&[bad]).is_err());
        assert!(robustness_curve(&[]).is_err());
    }
}
