//! Insert-only, content-addressed store of clouds and prototype banks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use defectforge_core::detector::PrototypeBank;
use defectforge_core::geometry::io::{parse_ply, write_ply, PlyExtras};
use defectforge_core::geometry::normals::ensure_normals;
use defectforge_core::pipeline::sdn::DEFAULT_VOXEL_SIZE;
use defectforge_core::pipeline::{fit_sdn_profile, SdnProfile};
use defectforge_core::{AnomalyMask, Error, PointCloud, Result};
use sha2::{Digest, Sha256};

/// Category name given to profiles fitted on single uploads.
pub const UPLOAD_CATEGORY: &str = "studio";

#[derive(Debug)]
pub struct StoredCloud {
    pub id: String,
    pub cloud: PointCloud,
    pub mask: Option<AnomalyMask>,
    /// Scale used to interpret instruction lengths. Committed results keep
    /// their parent's profile.
    pub profile: SdnProfile,
    /// Canonical PLY, served by the download endpoint.
    pub ply: String,
}

#[derive(Debug)]
pub struct StoredBank {
    pub id: String,
    pub bank: PrototypeBank,
    pub profile: SdnProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Created,
    Existing,
}

#[derive(Default)]
struct Inner {
    clouds: BTreeMap<String, Arc<StoredCloud>>,
    banks: BTreeMap<String, Arc<StoredBank>>,
    bytes: usize,
}

pub struct Store {
    inner: RwLock<Inner>,
    cap_bytes: usize,
    dir: Option<PathBuf>,
}

pub fn content_id(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..12])
}

#[derive(Debug)]
pub enum StoreError {
    Full { cap: usize },
    Core(Error),
}

impl From<Error> for StoreError {
    fn from(e: Error) -> Self {
        StoreError::Core(e)
    }
}

impl Store {
    /// Opens the store, loading anything persisted under `dir`.
    pub fn open(dir: Option<PathBuf>, cap_bytes: usize) -> Result<Self> {
        let store = Self {
            inner: RwLock::new(Inner::default()),
            cap_bytes,
            dir,
        };
        if let Some(dir) = store.dir.clone() {
            store.load_dir(&dir)?;
        }
        Ok(store)
    }

    fn load_dir(&self, dir: &Path) -> Result<()> {
        for sub in ["clouds", "banks"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::Io { path: p, source: e })?;
        }
        let mut inner = self.inner.write().expect("store lock");
        for path in sorted_files(&dir.join("clouds"), ".ply")? {
            let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let prof_path = path.with_extension("profile.json");
            let profile = SdnProfile::load(&prof_path)?;
            let loaded = parse_ply(&text, &path.display().to_string())?;
            let id = content_id(&text);
            let mut cloud = loaded.cloud;
            cloud.id = id.clone();
            inner.bytes += text.len();
            inner.clouds.insert(
                id.clone(),
                Arc::new(StoredCloud {
                    id,
                    cloud,
                    mask: loaded.mask,
                    profile,
                    ply: text,
                }),
            );
        }
        for path in sorted_files(&dir.join("banks"), ".json")? {
            let bank = PrototypeBank::load(&path)?;
            let text = bank.to_json();
            let profile = bank_profile(&bank)?;
            let id = content_id(&text);
            inner.bytes += text.len();
            inner.banks.insert(id.clone(), Arc::new(StoredBank { id, bank, profile }));
        }
        Ok(())
    }

    pub fn cloud(&self, id: &str) -> Option<Arc<StoredCloud>> {
        self.inner.read().expect("store lock").clouds.get(id).cloned()
    }

    pub fn bank(&self, id: &str) -> Option<Arc<StoredBank>> {
        self.inner.read().expect("store lock").banks.get(id).cloned()
    }

    pub fn bytes(&self) -> usize {
        self.inner.read().expect("store lock").bytes
    }

    /// Digest over every stored id, for checking that a request left the store alone.
    pub fn fingerprint(&self) -> String {
        let inner = self.inner.read().expect("store lock");
        let mut h = Sha256::new();
        for id in inner.clouds.keys().chain(inner.banks.keys()) {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        h.update(inner.bytes.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Stores an uploaded cloud: normals are ensured and a profile is fitted to it alone.
    pub fn insert_upload(&self, cloud: PointCloud, mask: Option<AnomalyMask>) -> std::result::Result<(Arc<StoredCloud>, Insert), StoreError> {
        let cloud = ensure_normals(&cloud)?;
        let profile = fit_sdn_profile(std::slice::from_ref(&cloud), UPLOAD_CATEGORY, DEFAULT_VOXEL_SIZE)?;
        self.insert_cloud(cloud, mask, profile)
    }

    pub fn insert_cloud(
        &self,
        mut cloud: PointCloud,
        mask: Option<AnomalyMask>,
        profile: SdnProfile,
    ) -> std::result::Result<(Arc<StoredCloud>, Insert), StoreError> {
        cloud.id = String::new();
        let ply = write_ply(&cloud, PlyExtras { mask: mask.as_ref(), scores: None })?;
        let id = content_id(&ply);
        cloud.id = id.clone();
        let mut inner = self.inner.write().expect("store lock");
        if let Some(existing) = inner.clouds.get(&id) {
            return Ok((existing.clone(), Insert::Existing));
        }
        if inner.bytes + ply.len() > self.cap_bytes {
            return Err(StoreError::Full { cap: self.cap_bytes });
        }
        if let Some(dir) = &self.dir {
            let path = dir.join("clouds").join(format!("{id}.ply"));
            fs::write(&path, &ply).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            profile.save(&path.with_extension("profile.json"))?;
        }
        inner.bytes += ply.len();
        let entry = Arc::new(StoredCloud {
            id: id.clone(),
            cloud,
            mask,
            profile,
            ply,
        });
        inner.clouds.insert(id, entry.clone());
        Ok((entry, Insert::Created))
    }

    pub fn insert_bank(&self, bank: PrototypeBank) -> std::result::Result<(Arc<StoredBank>, Insert), StoreError> {
        let profile = bank_profile(&bank)?;
        let text = bank.to_json();
        let id = content_id(&text);
        let mut inner = self.inner.write().expect("store lock");
        if let Some(existing) = inner.banks.get(&id) {
            return Ok((existing.clone(), Insert::Existing));
        }
        if inner.bytes + text.len() > self.cap_bytes {
            return Err(StoreError::Full { cap: self.cap_bytes });
        }
        if let Some(dir) = &self.dir {
            let path = dir.join("banks").join(format!("{id}.json"));
            bank.save(&path)?;
        }
        inner.bytes += text.len();
        let entry = Arc::new(StoredBank { id: id.clone(), bank, profile });
        inner.banks.insert(id, entry.clone());
        Ok((entry, Insert::Created))
    }
}

/// Rebuilds the normalization a bank was fitted under.
pub fn bank_profile(bank: &PrototypeBank) -> Result<SdnProfile> {
    let r = bank
        .profile
        .as_ref()
        .ok_or_else(|| Error::Contract("bank carries no profile reference".into()))?;
    SdnProfile::new(r.category.clone(), r.center.into(), r.radius, r.voxel_size)
}

fn sorted_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let rd = fs::read_dir(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::Io { path: dir.into(), source: e })?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(suffix) && !name.ends_with(".profile.json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
