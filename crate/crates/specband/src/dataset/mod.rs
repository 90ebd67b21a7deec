//! Dataset construction: chips, tiles, scene-level splits, manifests and
//! channel statistics.

mod split;

pub use split::{assign_splits, SplitWeighting};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{load_raster, MultiChannelImage};

/// Pixel-space bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub label: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub location: String,
    pub view_angle: f64,
    pub azimuth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sun_elevation: Option<f64>,
}

/// One source satellite scene with its metadata and annotations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub ms_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pan_path: Option<PathBuf>,
    pub metadata: SceneMetadata,
    /// Bounding-box annotations for classification scenes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
    /// Mask path for segmentation scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<PathBuf>,
    /// Number of dataset items this scene yields (e.g. tile count); used by
    /// item-weighted splitting when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_count: Option<usize>,
}

impl SceneRecord {
    /// Weight used by item-weighted splitting.
    pub fn item_weight(&self) -> f64 {
        self.item_count
            .unwrap_or_else(|| self.annotations.len().max(1)) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split {other:?}"))),
        }
    }
}

/// Scene-to-split map with the achieved balance bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
    pub target_fractions: [f64; 3],
    pub achieved_fractions: [f64; 3],
    /// Total-variation distance between each metadata property's per-split
    /// histogram and its global histogram, summed over splits.
    pub divergence: BTreeMap<String, f64>,
}

impl SplitAssignment {
    pub fn split_of(&self, scene_id: &str) -> Option<Split> {
        self.assignment.get(scene_id).copied()
    }

    pub fn scenes_in(&self, split: Split) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        text.push('\n');
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Segmentation,
}

/// One dataset item: an RGB+NIR pair with its label or mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestItem {
    pub item_id: String,
    pub rgb_path: String,
    pub nir_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub scene_id: String,
    pub split: Split,
}

/// Item awaiting a split assignment (input to [`write_manifest`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemDraft {
    pub item_id: String,
    pub rgb_path: String,
    pub nir_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub scene_id: String,
}

/// The labelled dataset: items with split assignments plus the label set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: TaskKind,
    pub label_set: Vec<String>,
    #[serde(default)]
    pub excluded_class_ids: Vec<u32>,
    pub items: Vec<ManifestItem>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(Error::Data(format!("duplicate item_id {:?}", item.item_id)));
            }
        }
        let n_classes = self.label_set.len() as u32;
        for &id in &self.excluded_class_ids {
            if id >= n_classes {
                return Err(Error::Data(format!(
                    "excluded class id {id} outside label set of {n_classes}"
                )));
            }
        }
        for item in &self.items {
            if let Some(label) = item.label {
                if label >= n_classes {
                    return Err(Error::Data(format!(
                        "item {:?} label {label} outside label set of {n_classes}",
                        item.item_id
                    )));
                }
            }
        }
        // scene-level split integrity
        let mut scene_split: BTreeMap<&str, Split> = BTreeMap::new();
        for item in &self.items {
            if let Some(&prev) = scene_split.get(item.scene_id.as_str()) {
                if prev != item.split {
                    return Err(Error::Data(format!(
                        "scene {:?} appears in splits {} and {}",
                        item.scene_id,
                        prev.name(),
                        item.split.name()
                    )));
                }
            } else {
                scene_split.insert(&item.scene_id, item.split);
            }
        }
        Ok(())
    }

    pub fn items_in(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        if let Some(parent) = path.as_ref().parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))?;
        text.push('\n');
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| Error::Data(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Crop one chip per annotation, expanding each bbox by `pad_fraction` of
/// its own size on every side and clamping to the scene bounds.
pub fn chip_scene(
    scene: &MultiChannelImage,
    annotations: &[Annotation],
    pad_fraction: f64,
) -> Result<Vec<(MultiChannelImage, u32)>> {
    if pad_fraction < 0.0 || !pad_fraction.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "pad_fraction must be a non-negative real, got {pad_fraction}"
        )));
    }
    let (sw, sh) = (scene.width(), scene.height());
    let mut chips = Vec::with_capacity(annotations.len());
    for ann in annotations {
        let b = ann.bbox;
        if b.width == 0 || b.height == 0 || b.x >= sw || b.y >= sh {
            return Err(Error::InvalidParameter(format!(
                "bbox {b:?} outside scene {sw}x{sh}"
            )));
        }
        let pad_x = pad_fraction * b.width as f64;
        let pad_y = pad_fraction * b.height as f64;
        let x0 = (b.x as f64 - pad_x).floor().max(0.0) as usize;
        let y0 = (b.y as f64 - pad_y).floor().max(0.0) as usize;
        let x1 = ((b.x + b.width) as f64 + pad_x).ceil().min(sw as f64) as usize;
        let y1 = ((b.y + b.height) as f64 + pad_y).ceil().min(sh as f64) as usize;
        chips.push((scene.crop(x0, y0, x1 - x0, y1 - y0)?, ann.label));
    }
    Ok(chips)
}

/// Remove chips whose class has fewer than `min_count` examples.
pub fn filter_rare_classes<T>(items: Vec<(T, u32)>, min_count: usize) -> Vec<(T, u32)> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for (_, label) in &items {
        *counts.entry(*label).or_default() += 1;
    }
    items
        .into_iter()
        .filter(|(_, label)| counts[label] >= min_count)
        .collect()
}

/// Non-overlapping row-major tiles of side `tile`; trailing partial strips
/// are dropped. The mask, when present, is tiled identically.
pub fn tile_scene(
    scene: &MultiChannelImage,
    tile: usize,
    mask: Option<&MultiChannelImage>,
) -> Result<Vec<(MultiChannelImage, Option<MultiChannelImage>)>> {
    if tile == 0 {
        return Err(Error::InvalidParameter("tile size must be >= 1".into()));
    }
    if let Some(mask) = mask {
        if mask.width() != scene.width() || mask.height() != scene.height() {
            return Err(Error::ShapeMismatch(format!(
                "mask {}x{} vs scene {}x{}",
                mask.width(),
                mask.height(),
                scene.width(),
                scene.height()
            )));
        }
    }
    let nx = scene.width() / tile;
    let ny = scene.height() / tile;
    let mut tiles = Vec::with_capacity(nx * ny);
    for ty in 0..ny {
        for tx in 0..nx {
            let img = scene.crop(tx * tile, ty * tile, tile, tile)?;
            let mask_tile = mask
                .map(|m| m.crop(tx * tile, ty * tile, tile, tile))
                .transpose()?;
            tiles.push((img, mask_tile));
        }
    }
    Ok(tiles)
}

/// Assemble and write a dataset manifest, assigning each item the split of
/// its parent scene.
pub fn write_manifest(
    items: Vec<ItemDraft>,
    splits: &SplitAssignment,
    task: TaskKind,
    label_set: Vec<String>,
    excluded_class_ids: Vec<u32>,
    out_path: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let mut manifest_items = Vec::with_capacity(items.len());
    for draft in items {
        let split = splits.split_of(&draft.scene_id).ok_or_else(|| {
            Error::Data(format!("scene {:?} has no split assignment", draft.scene_id))
        })?;
        manifest_items.push(ManifestItem {
            item_id: draft.item_id,
            rgb_path: draft.rgb_path,
            nir_path: draft.nir_path,
            label: draft.label,
            mask_path: draft.mask_path,
            scene_id: draft.scene_id,
            split,
        });
    }
    let manifest = DatasetManifest {
        task,
        label_set,
        excluded_class_ids,
        items: manifest_items,
    };
    manifest.save(out_path)?;
    Ok(manifest)
}

/// Per-channel statistics in [0, 1] units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStat {
    pub channel: String,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of samples/255 per channel over
/// every item of a split, reading the RGB and NIR images of each item.
pub fn compute_channel_stats(
    manifest: &DatasetManifest,
    split: Split,
    root: &Path,
) -> Result<Vec<ChannelStat>> {
    let mut sums: Vec<(String, f64, f64, u64)> = Vec::new(); // name, sum, sum_sq, n
    let add_image = |img: &MultiChannelImage,
                     offset: usize,
                     name_of: &dyn Fn(usize) -> String,
                     sums: &mut Vec<(String, f64, f64, u64)>| {
        for (c, plane) in img.planes().iter().enumerate() {
            let slot = offset + c;
            if sums.len() <= slot {
                sums.push((name_of(c), 0.0, 0.0, 0));
            }
            let entry = &mut sums[slot];
            for &v in plane {
                let x = f64::from(v) / 255.0;
                entry.1 += x;
                entry.2 += x * x;
                entry.3 += 1;
            }
        }
    };

    let mut n_items = 0usize;
    for item in manifest.items_in(split) {
        let rgb = load_raster(root.join(&item.rgb_path))?;
        let nir = load_raster(root.join(&item.nir_path))?;
        add_image(&rgb, 0, &|c| rgb.channel_names()[c].clone(), &mut sums);
        // the manifest schema defines this image as the NIR group, so the
        // slot keeps that name regardless of what the PNG decoder calls it
        add_image(
            &nir,
            rgb.channel_count(),
            &|c| {
                if nir.channel_count() == 1 {
                    "NIR".to_string()
                } else {
                    format!("NIR{c}")
                }
            },
            &mut sums,
        );
        n_items += 1;
    }
    if n_items == 0 {
        return Err(Error::Data(format!("split {} is empty", split.name())));
    }

    Ok(sums
        .into_iter()
        .map(|(channel, sum, sum_sq, n)| {
            let n = n as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            ChannelStat {
                channel,
                mean,
                std: var.sqrt(),
            }
        })
        .collect())
}
