//! Corpus generation: many synthesized defects over a set of normal clouds.
//!
//! Entries are enumerated in defect-type order and assigned sources
//! round-robin. Entry `i` uses seed `derive_seed(master, i)`; retry `a > 0`
//! uses `derive_seed(entry_seed, a)` and always takes the rule template.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::io::save_cloud;
use crate::geometry::PointCloud;
use crate::instruction::{execute, mllm_generate, resolve, CategoryMetadata, EndpointConfig, Provenance};
use crate::mask::DefectType;
use crate::rng::derive_seed;

use super::augment::{augment, AugmentConfig};
use super::sdn::SdnProfile;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MAX_ATTEMPTS: usize = 5;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct BatchRequest<'a> {
    pub sources: &'a [PointCloud],
    pub profile: &'a SdnProfile,
    pub counts: BTreeMap<DefectType, usize>,
    pub augment: Option<AugmentConfig>,
    pub meta: &'a CategoryMetadata,
    pub seed: u64,
    pub out_dir: &'a Path,
    /// Model endpoint for instruction candidates; offline when `None`.
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub entry_id: String,
    pub index: usize,
    pub source_id: String,
    pub defect: DefectType,
    /// Seed of the attempt that produced the output (or of the last attempt).
    pub seed: u64,
    pub attempts: usize,
    pub status: EntryStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cloud_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub category: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn completed(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.status == EntryStatus::Ok)
    }
}

/// Hash of everything that determines the corpus contents.
pub fn config_hash(req: &BatchRequest<'_>) -> String {
    let sources: Vec<(String, usize)> = req.sources.iter().map(|c| (c.id.clone(), c.len())).collect();
    let doc = serde_json::json!({
        "category": req.meta.category,
        "counts": req.counts,
        "seed": req.seed,
        "augment": req.augment,
        "profile": req.profile,
        "sources": sources,
        "model": req.endpoint.as_ref().map(|e| e.model.clone()),
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub fn corpus_dir(out_dir: &Path, category: &str) -> PathBuf {
    out_dir.join(category)
}

struct Attempt {
    cloud: PointCloud,
    mask: crate::mask::AnomalyMask,
    provenance: Provenance,
}

fn attempt(req: &BatchRequest<'_>, source: &PointCloud, defect: DefectType, seed: u64, first: bool) -> Result<Attempt> {
    let candidate = match (&req.endpoint, first) {
        (Some(ep), true) => match mllm_generate(req.meta, defect, ep) {
            Ok(text) => Some(text),
            Err(e) => {
                log::warn!("model endpoint unavailable, using rule template: {e}");
                None
            }
        },
        _ => None,
    };
    let resolved = resolve(candidate.as_deref(), defect, source, req.meta, req.profile, seed);
    let mut run = execute(&resolved.instruction, source, req.profile)?;
    run.provenance.source = resolved.source;
    if run.mask.count() == 0 {
        return Err(Error::Instruction("synthesis produced an empty mask".into()));
    }
    let (cloud, mask) = match req.augment.filter(|a| a.any_enabled()) {
        Some(mut cfg) => {
            cfg.seed = derive_seed(seed, u64::MAX);
            cfg.noise.std *= req.profile.radius;
            augment(&run.cloud, &run.mask, &cfg)?
        }
        None => (run.cloud, run.mask),
    };
    if mask.count() == 0 {
        return Err(Error::Instruction("augmentation dropped every anomalous point".into()));
    }
    Ok(Attempt {
        cloud,
        mask,
        provenance: run.provenance,
    })
}

fn run_entry(req: &BatchRequest<'_>, dir: &Path, index: usize, defect: DefectType) -> Result<ManifestEntry> {
    let source = &req.sources[index % req.sources.len()];
    let entry_id = format!("{index:05}_{defect}");
    let base = derive_seed(req.seed, index as u64);
    let mut last_error = String::new();
    let mut seed = base;
    for a in 0..MAX_ATTEMPTS {
        seed = if a == 0 { base } else { derive_seed(base, a as u64) };
        match attempt(req, source, defect, seed, a == 0) {
            Ok(out) => {
                let cloud_file = format!("{entry_id}.ply");
                let mask_file = format!("{entry_id}.mask.ply");
                let mut cloud = out.cloud;
                cloud.id = entry_id.clone();
                save_cloud(&cloud, None, &dir.join(&cloud_file))?;
                save_cloud(&cloud, Some(&out.mask), &dir.join(&mask_file))?;
                return Ok(ManifestEntry {
                    entry_id,
                    index,
                    source_id: source.id.clone(),
                    defect,
                    seed,
                    attempts: a + 1,
                    status: EntryStatus::Ok,
                    cloud_file: Some(cloud_file),
                    mask_file: Some(mask_file),
                    provenance: Some(out.provenance),
                    error: None,
                });
            }
            Err(e) => {
                log::debug!("{entry_id} attempt {} failed: {e}", a + 1);
                last_error = e.to_string();
            }
        }
    }
    log::warn!("{entry_id} skipped after {MAX_ATTEMPTS} attempts: {last_error}");
    Ok(ManifestEntry {
        entry_id,
        index,
        source_id: source.id.clone(),
        defect,
        seed,
        attempts: MAX_ATTEMPTS,
        status: EntryStatus::Skipped,
        cloud_file: None,
        mask_file: None,
        provenance: None,
        error: Some(last_error),
    })
}

/// Synthesizes the requested counts and writes clouds, masks and
/// `manifest.json` under `<out_dir>/<category>/`. Output is identical for
/// any thread count. The manifest is written even when nothing is requested.
pub fn batch_synthesize(req: &BatchRequest<'_>) -> Result<CorpusManifest> {
    if req.sources.is_empty() {
        return Err(Error::contract("batch synthesis needs at least one source cloud"));
    }
    req.profile.check()?;
    let plan: Vec<DefectType> = req
        .counts
        .iter()
        .flat_map(|(&u, &n)| std::iter::repeat_n(u, n))
        .collect();
    let manifest = |entries| CorpusManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        category: req.meta.category.clone(),
        master_seed: req.seed,
        config_hash: config_hash(req),
        entries,
    };
    let dir = corpus_dir(req.out_dir, &req.meta.category);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let entries: Vec<ManifestEntry> = plan
        .par_iter()
        .enumerate()
        .map(|(i, &u)| run_entry(req, &dir, i, u))
        .collect::<Result<_>>()?;
    let m = manifest(entries);
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&m)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(m)
}
