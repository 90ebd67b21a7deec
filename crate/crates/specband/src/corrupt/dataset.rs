//! Corrupting RGB+NIR pairs and whole dataset manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::raster::{load_raster, save_raster, MultiChannelImage};
use crate::rng::{derive_seed, fnv1a64, GROUP_TAG_NIR, GROUP_TAG_RGB, GROUP_TAG_SHARED};

use super::apply::apply_corruption_with;
use super::{CorruptionSpec, RandomnessPolicy, SeverityTable};

/// Corrupt an RGB+NIR pair according to `spec`, with the default severity
/// table.
pub fn corrupt_multispectral(
    rgb: &MultiChannelImage,
    nir: &MultiChannelImage,
    spec: &CorruptionSpec,
) -> Result<(MultiChannelImage, MultiChannelImage)> {
    corrupt_multispectral_with(rgb, nir, spec, &SeverityTable::default())
}

/// Corrupt an RGB+NIR pair: the NIR channel is corrupted as three stacked
/// copies through the same 3-channel machinery as RGB, then collapsed back
/// by taking plane 0. Untargeted groups are returned byte-identical.
///
/// Under the shared policy both applications run from one derived seed;
/// under the independent policy each group derives its own.
pub fn corrupt_multispectral_with(
    rgb: &MultiChannelImage,
    nir: &MultiChannelImage,
    spec: &CorruptionSpec,
    table: &SeverityTable,
) -> Result<(MultiChannelImage, MultiChannelImage)> {
    if rgb.width() != nir.width() || rgb.height() != nir.height() {
        return Err(Error::ShapeMismatch(format!(
            "rgb {}x{} vs nir {}x{}",
            rgb.width(),
            rgb.height(),
            nir.width(),
            nir.height()
        )));
    }
    if nir.channel_count() != 1 {
        return Err(Error::InvalidParameter(format!(
            "nir input must be single-channel, got {}",
            nir.channel_count()
        )));
    }

    let (rgb_tag, nir_tag) = match spec.randomness_policy {
        RandomnessPolicy::Shared => (GROUP_TAG_SHARED, GROUP_TAG_SHARED),
        RandomnessPolicy::Independent => (GROUP_TAG_RGB, GROUP_TAG_NIR),
    };

    let rgb_out = if spec.target.includes_rgb() {
        let seed = derive_seed(spec.seed, &[rgb_tag]);
        apply_corruption_with(rgb, spec.kind, spec.severity, seed, table)?
    } else {
        rgb.clone()
    };

    let nir_out = if spec.target.includes_nir() {
        let seed = derive_seed(spec.seed, &[nir_tag]);
        let stacked = nir.replicate_channel(3)?;
        let corrupted = apply_corruption_with(&stacked, spec.kind, spec.severity, seed, table)?;
        // collapse: take plane 0 (averaging would understate noise severity)
        corrupted
            .take_channel(0)?
            .with_channel_names(nir.channel_names().to_vec())?
    } else {
        nir.clone()
    };

    Ok((rgb_out, nir_out))
}

/// One corrupted item in the variant manifest (JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRecord {
    pub item_id: String,
    pub kind: String,
    pub severity: u8,
    pub target: String,
    pub seed: u64,
    pub rgb_path: String,
    pub nir_path: String,
}

/// Summary of a dataset corruption run.
#[derive(Debug, Clone)]
pub struct CorruptDatasetReport {
    pub records: Vec<VariantRecord>,
    /// (item_id, error message) for items that failed; the run continues.
    pub failures: Vec<(String, String)>,
    pub manifest_path: PathBuf,
}

impl CorruptDatasetReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Corrupt every manifest item under every spec, writing images and a
/// variant manifest under `out_dir`.
///
/// Per-item seeds are derived from (spec.seed, item id), so outputs do not
/// depend on worker count or scheduling, and re-running overwrites with
/// identical bytes. I/O failures are collected per item and reported; the
/// run continues past them.
pub fn corrupt_dataset(
    manifest: &DatasetManifest,
    specs: &[CorruptionSpec],
    root: &Path,
    out_dir: &Path,
    table: &SeverityTable,
    threads: Option<usize>,
) -> Result<CorruptDatasetReport> {
    table.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    struct Job {
        item_id: String,
        rgb_in: PathBuf,
        nir_in: PathBuf,
        spec: CorruptionSpec,
        item_seed: u64,
        rgb_out: PathBuf,
        nir_out: PathBuf,
        rgb_rel: String,
        nir_rel: String,
    }

    let mut jobs = Vec::with_capacity(manifest.items.len() * specs.len());
    for item in &manifest.items {
        for spec in specs {
            let item_seed = derive_seed(spec.seed, &[fnv1a64(item.item_id.as_bytes())]);
            let stem = format!(
                "{}__{}_s{}_{}",
                item.item_id,
                spec.kind.name(),
                spec.severity,
                spec.target.name()
            );
            let rgb_rel = format!("{stem}_rgb.png");
            let nir_rel = format!("{stem}_nir.png");
            jobs.push(Job {
                item_id: item.item_id.clone(),
                rgb_in: root.join(&item.rgb_path),
                nir_in: root.join(&item.nir_path),
                spec: *spec,
                item_seed,
                rgb_out: out_dir.join(&rgb_rel),
                nir_out: out_dir.join(&nir_rel),
                rgb_rel,
                nir_rel,
            });
        }
    }

    let run_job = |job: &Job| -> std::result::Result<VariantRecord, (String, String)> {
        let fail = |e: Error| (job.item_id.clone(), e.to_string());
        let rgb = load_raster(&job.rgb_in).map_err(fail)?;
        let nir = load_raster(&job.nir_in).map_err(fail)?;
        let item_spec = CorruptionSpec {
            seed: job.item_seed,
            ..job.spec
        };
        let (rgb_c, nir_c) = corrupt_multispectral_with(&rgb, &nir, &item_spec, table).map_err(fail)?;
        save_raster(&rgb_c, &job.rgb_out).map_err(fail)?;
        save_raster(&nir_c, &job.nir_out).map_err(fail)?;
        Ok(VariantRecord {
            item_id: job.item_id.clone(),
            kind: job.spec.kind.name().to_string(),
            severity: job.spec.severity,
            target: job.spec.target.name().to_string(),
            seed: job.item_seed,
            rgb_path: job.rgb_rel.clone(),
            nir_path: job.nir_rel.clone(),
        })
    };

    let results: Vec<std::result::Result<VariantRecord, (String, String)>> = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                jobs.par_iter().map(run_job).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            jobs.par_iter().map(run_job).collect()
        }
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(record) => records.push(record),
            Err(failure) => failures.push(failure),
        }
    }

    let manifest_path = out_dir.join("variants.jsonl");
    let mut file = std::fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for record in &records {
        let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&manifest_path, e))?;
    }

    Ok(CorruptDatasetReport {
        records,
        failures,
        manifest_path,
    })
}

/// Read a variant manifest written by [`corrupt_dataset`].
pub fn load_variant_manifest(path: &Path) -> Result<Vec<VariantRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| serde_json::from_str(line).map_err(|e| Error::Data(format!("{e}: {line}"))))
        .collect()
}
